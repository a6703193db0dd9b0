"""Every model trained anywhere in the suite must satisfy its normal equations."""
import functools

import maestro.cli
import maestro.regression as regression

RESIDUAL_TOLERANCE = 1e-8
TRAININGS = []  # (residual, reference) for every fit in this session

_train = regression.train


@functools.wraps(_train)
def checked_train(ts, lam=regression.DEFAULT_LAMBDA):
    model = _train(ts, lam)
    residual, reference = regression.normal_equations_residual(ts, model)
    TRAININGS.append((residual, reference))
    assert residual <= RESIDUAL_TOLERANCE * reference, (
        f"normal-equations residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:g} x {reference:.3e}")
    return model


# patched at import time so test modules and the CLI pick up the checked version
regression.train = checked_train
maestro.cli.train = checked_train


# -- acceptance summary ----------------------------------------------------------

CRITERIA = tuple(f"A{i}" for i in range(1, 12))
ACCEPTANCE = {}  # criterion -> (passed, detail), filled by test_acceptance


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, f"{criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    if "A2" in ACCEPTANCE:
        # widen to every fit made anywhere in the session
        worst = max((r / ref if ref else r for r, ref in TRAININGS), default=0.0)
        ok = all(r <= RESIDUAL_TOLERANCE * ref for r, ref in TRAININGS)
        ACCEPTANCE["A2"] = (ok, f"{len(TRAININGS)} trainings in session, worst relative residual {worst:.2e}")
    terminalreporter.section("acceptance criteria")
    for c in CRITERIA:
        passed, detail = ACCEPTANCE.get(c, (False, "did not complete"))
        terminalreporter.write_line(f"{c} {'PASS' if passed else 'FAIL'}  {detail}")
