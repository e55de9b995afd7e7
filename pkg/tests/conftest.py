import numpy as np
import pytest
from hypothesis import settings

from ergodic_mfg.grid import Grid
from ergodic_mfg.model import CostClass, InteractionSpec, ModelSpec, quadratic_lyapunov

settings.register_profile("suite", max_examples=40, deadline=None)
settings.load_profile("suite")


def make_spec(drift=None, sigma=1.0, cost=None, box=((0.0, 0.0),), res=(1,), dimension=1,
              interaction=None, c0=4.0, c1=1.0, **kw) -> ModelSpec:
    """Small hand-built model: constant scalar diffusion, user drift and cost."""
    drift = drift or (lambda x, u: 0.0 * np.asarray(x) + 0.0 * np.asarray(u)[..., :1])
    cost = cost or (lambda x, u: 0.0 * np.asarray(x)[..., 0] + 0.0 * np.asarray(u)[..., 0])
    return ModelSpec(
        dimension=dimension,
        drift=drift,
        diffusion=lambda x: sigma * np.broadcast_to(np.eye(dimension), np.shape(x)[:-1] + (dimension, dimension)),
        control_box=box,
        control_resolution=res,
        base_cost=cost,
        lyapunov=quadratic_lyapunov(c0, c1),
        interaction=interaction or InteractionSpec(),
        cost_class=kw.pop("cost_class", CostClass("C2")),
        **kw,
    )


@pytest.fixture
def lq_grid():
    return Grid.from_spacing(6.0, 0.05)


ACCEPTANCE_LINES: list[str] = []


def record(number: int, passed: bool, detail: str) -> bool:
    """Print one pass/fail line for an acceptance criterion and keep it for the
    end-of-run summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
