from d2d_offload.validation import CHECKS, check_bounds, check_distance_distribution, check_kernels, run_checks


def test_every_criterion_has_a_check():
    assert sorted(CHECKS) == list(range(1, 12))


def test_appendix_lens_formula_is_caught(cfg):
    trap = check_distance_distribution(cfg.replace(omega2="appendix"), scale=0.2)
    good = check_distance_distribution(cfg, scale=0.2)
    assert not trap.passed
    # the orders the correct formula gets right are the ones the typo breaks
    assert "i=1" in good.lines[0] and good.lines[0].endswith("ok")
    assert trap.lines[0].endswith("FAIL") and trap.lines[1].endswith("FAIL")


def test_cheap_checks_pass(cfg):
    assert check_bounds(cfg).passed
    assert check_kernels(cfg, scale=0.02).passed


def test_run_checks_logs_one_header_per_check(cfg):
    lines = []
    res = run_checks(cfg, [9], log=lines.append)
    assert res[0].passed and lines[0].startswith("[PASS]  9")
