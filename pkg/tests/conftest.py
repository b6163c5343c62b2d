import pytest

from hsa.config import Convexity, LossAssumptions, SgdConfig, Strategy, validate

# synthetic parameters used for the Figure-1 style experiments
FIG1 = dict(L=1.0, m=1.0, K=2.0, sigma=1.0, D=1.0, n=5, eta=0.1, alpha=2.0)


def fig1_problem(convexity="strongly_convex", T=100, *, lam=1.0, alpha=2.0,
                 strategy="full_batch", b=None, n=None, L=None, D=None):
    n = FIG1["n"] if n is None else n
    kind = Convexity(convexity)
    m = FIG1["m"] if kind is Convexity.STRONGLY_CONVEX else 0.0
    assumptions = LossAssumptions(FIG1["L"] if L is None else L, lam, kind,
                                  FIG1["K"], m)
    strategy = Strategy(strategy)
    if b is None:
        b = n
    config = SgdConfig(FIG1["eta"], FIG1["sigma"], FIG1["K"], n, b, T,
                       FIG1["D"] if D is None else D, strategy, alpha)
    return validate(assumptions, config)


@pytest.fixture
def strongly_convex():
    return fig1_problem("strongly_convex")


@pytest.fixture
def convex():
    return fig1_problem("convex")


@pytest.fixture
def nonconvex():
    return fig1_problem("non_convex")


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for lines in sorted(test_acceptance.VERDICTS, key=lambda ls: ls[0]):
        for line in lines:
            terminalreporter.write_line(line)
