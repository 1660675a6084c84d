import numpy as np
import pytest

from mrfrec.corpus import Entity, EntityType, Modifier, Record
from mrfrec.energy import EnergyModel, HyperParams, init_model
from mrfrec.graph import Bigraph, TaskKind

P, A, Q, O = Modifier.PRESENT, Modifier.ABSENT, Modifier.POSSIBLE, Modifier.OTHER


def sym(name):
    return Entity(name, EntityType.SYMPTOM)


def dis(name):
    return Entity(name, EntityType.DISEASE)


def rec(rid, *mentions):
    """``rec("r1", ("fever", "symptom", P), ...)``."""
    return Record(rid, tuple((Entity(n, EntityType(k)), m) for n, k, m in mentions))


def sd_bigraph(n_y, n_x, edges):
    """SD bigraph with diseases d0.. and symptoms s0..; ``edges`` maps (i, j) -> weight."""
    ys = [dis(f"d{i}") for i in range(n_y)]
    xs = [sym(f"s{j}") for j in range(n_x)]
    return Bigraph(TaskKind.SD, xs, ys, {(ys[i], xs[j]): w for (i, j), w in edges.items()})


def complete_bigraph(n_y, n_x):
    return sd_bigraph(n_y, n_x, {(i, j): 1 for i in range(n_y) for j in range(n_x)})


def theta_model(f: np.ndarray) -> EnergyModel:
    """Theta model on a complete bigraph whose f matrix is exactly ``f``."""
    g = complete_bigraph(*f.shape)
    m = init_model("theta", g)
    m.theta = np.array([f[i, j] for i, j in zip(g.edge_y, g.edge_x)], dtype=float)
    return m


def embedded_model(kind, n_y, n_x, dim, seed, density=0.6):
    rng = np.random.default_rng(seed)
    edges = {(i, j): int(rng.integers(1, 5)) for i in range(n_y) for j in range(n_x) if rng.random() < density}
    g = sd_bigraph(n_y, n_x, edges)
    m = init_model(kind, g, HyperParams(dim=dim, seed=seed))
    if m.W is not None:
        m.W = m.W + 0.3 * rng.normal(size=m.W.shape)
    if m.r is not None:
        m.r = 0.3 * rng.normal(size=m.r.shape)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one PASS/FAIL line per criterion ------------------------------

CRITERIA = {
    1: "factorized conditionals match enumeration",
    2: "analytic gradients match finite differences",
    3: "small SGD steps never lower the likelihood",
    4: "ranking metrics exact",
    5: "method ordering and oracle margin on synthetic data",
    6: "embedding norms and cluster neighbours",
    7: "determinism across runs",
    8: "test-record filtering",
}
DETAILS: dict[int, list[str]] = {}
_OUTCOMES: dict[int, list[bool]] = {}


def note(criterion: int, text: str) -> None:
    DETAILS.setdefault(criterion, []).append(text)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        # an expected failure is still a failure of the criterion
        ok = report.passed and not hasattr(report, "wasxfail")
        _OUTCOMES.setdefault(n, []).append(ok)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        status = "PASS" if all(_OUTCOMES[n]) else "FAIL"
        detail = "; ".join(DETAILS.get(n, []))
        terminalreporter.write_line(f"criterion {n} {status}: {CRITERIA[n]}" + (f" ({detail})" if detail else ""))
