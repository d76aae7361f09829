from functools import lru_cache

from hypothesis import HealthCheck, settings

from panelbounds.simlab import StaticDgp, exact_cells

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")


@lru_cache(maxsize=None)
def design_cells(T: int, link: str = "logit", beta: float = 1.0, p_x: float = 0.5, spec: str = "honore_tamer_plus_correlated"):
    """Exact population cells of a built-in design, cached across tests."""
    return exact_cells(StaticDgp(T, p_x, beta, link, spec))


# one line per acceptance criterion, filled by tests/test_acceptance.py
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
