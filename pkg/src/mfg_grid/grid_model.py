"""Static power-system data: buses, generators, lines and the PTDF matrix.

Bus indices are zero-based in memory and one-based in network files.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class NetworkError(ValueError):
    """Raised for malformed or structurally invalid network data."""


@dataclass(frozen=True)
class GeneratorCost:
    """Quadratic generation cost ``0.5*alpha*g**2 + beta*g + gamma``."""

    alpha: float  # $/MW^2h
    beta: float  # $/MWh
    gamma: float = 0.0  # $
    capacity: float = 600.0  # MW

    def cost(self, g):
        return 0.5 * self.alpha * g * g + self.beta * g + self.gamma


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    capacity: float  # MW
    reactance: float | None = None  # p.u.


@dataclass
class Network:
    n_buses: int
    lines: list[Line]
    generators: list[GeneratorCost]
    ptdf: np.ndarray
    slack_bus: int = 0
    name: str = "network"
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    # cached vector views used by the dispatch hot path
    def _vec(self, key, fn):
        if key not in self._arrays:
            self._arrays[key] = np.ascontiguousarray(fn(), dtype=float)
        return self._arrays[key]

    @property
    def alpha(self) -> np.ndarray:
        return self._vec("alpha", lambda: [g.alpha for g in self.generators])

    @property
    def beta(self) -> np.ndarray:
        return self._vec("beta", lambda: [g.beta for g in self.generators])

    @property
    def gamma(self) -> np.ndarray:
        return self._vec("gamma", lambda: [g.gamma for g in self.generators])

    @property
    def gen_capacity(self) -> np.ndarray:
        return self._vec("gcap", lambda: [g.capacity for g in self.generators])

    @property
    def line_capacity(self) -> np.ndarray:
        return self._vec("fcap", lambda: [ln.capacity for ln in self.lines])

    def incidence(self) -> np.ndarray:
        """L x N branch-bus incidence, +1 at the from bus and -1 at the to bus."""
        a = np.zeros((self.n_lines, self.n_buses))
        for k, ln in enumerate(self.lines):
            a[k, ln.from_bus] = 1.0
            a[k, ln.to_bus] = -1.0
        return a

    @classmethod
    def from_reactances(cls, n_buses, lines, generators, slack_bus=0, name="network"):
        ptdf = compute_ptdf(lines, n_buses, slack_bus)
        return cls(n_buses, list(lines), list(generators), ptdf, slack_bus, name)


def _is_connected(n_buses: int, lines) -> bool:
    if n_buses == 0:
        return False
    adj = [[] for _ in range(n_buses)]
    for ln in lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n_buses


def compute_ptdf(lines, n_buses: int, slack: int = 0) -> np.ndarray:
    """DC power-flow PTDF matrix with the slack column zeroed.

    Parameters
    ----------
    lines : sequence of Line
        Every line must carry a positive reactance.
    n_buses : int
    slack : int
        Zero-based reference bus; injections there are absorbed.

    Returns
    -------
    ndarray, shape (L, N)
        ``ptdf[l, n]`` is the MW flow on line ``l`` (from -> to positive) per MW
        injected at bus ``n`` and withdrawn at the slack.
    """
    lines = list(lines)
    for k, ln in enumerate(lines):
        if ln.reactance is None:
            raise NetworkError(f"line {k + 1} has no reactance; cannot compute PTDF")
        if not ln.reactance > 0:
            raise NetworkError(f"line {k + 1} reactance must be positive")
    if not 0 <= slack < n_buses:
        raise NetworkError(f"slack bus {slack + 1} out of range")
    if not _is_connected(n_buses, lines):
        raise NetworkError("network graph is not connected")

    n_lines = len(lines)
    inc = np.zeros((n_lines, n_buses))
    b = np.empty(n_lines)
    for k, ln in enumerate(lines):
        inc[k, ln.from_bus] = 1.0
        inc[k, ln.to_bus] = -1.0
        b[k] = 1.0 / ln.reactance
    bf = b[:, None] * inc
    bbus = inc.T @ bf
    keep = [n for n in range(n_buses) if n != slack]
    ptdf = np.zeros((n_lines, n_buses))
    if keep:
        red = bbus[np.ix_(keep, keep)]
        ptdf[:, keep] = np.linalg.solve(red.T, bf[:, keep].T).T
    return ptdf


def validate_network(network: Network) -> list[str]:
    """Return a list of violated invariants; empty when the network is valid."""
    problems = []
    n = network.n_buses
    if len(network.generators) != n:
        problems.append(
            f"generators: expected exactly one per bus ({n}), got {len(network.generators)}"
        )
    for i, gen in enumerate(network.generators):
        if not gen.alpha > 0:
            problems.append(f"bus {i + 1}: generator alpha must be > 0 (strong convexity)")
        if not gen.capacity > 0:
            problems.append(f"bus {i + 1}: generator capacity must be > 0")
    for k, ln in enumerate(network.lines):
        if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n):
            problems.append(f"line {k + 1}: endpoint out of range")
        elif ln.from_bus == ln.to_bus:
            problems.append(f"line {k + 1}: from_bus equals to_bus")
        if not ln.capacity > 0:
            problems.append(f"line {k + 1}: capacity must be > 0")
        if ln.reactance is not None and not ln.reactance > 0:
            problems.append(f"line {k + 1}: reactance must be > 0")
    ptdf = np.asarray(network.ptdf)
    if ptdf.shape != (network.n_lines, n):
        problems.append(
            f"ptdf: dimensional mismatch, expected {network.n_lines}x{n}, got "
            f"{'x'.join(str(s) for s in ptdf.shape)}"
        )
    elif not 0 <= network.slack_bus < n:
        problems.append(f"slack bus {network.slack_bus + 1} out of range")
    elif np.any(ptdf[:, network.slack_bus] != 0.0):
        problems.append(f"ptdf: slack column (bus {network.slack_bus + 1}) must be zero")
    if all(0 <= ln.from_bus < n and 0 <= ln.to_bus < n for ln in network.lines):
        if not _is_connected(n, network.lines):
            problems.append("network graph is not connected")
    return problems


# --------------------------------------------------------------------------
# network file grammar
#
#   [buses]        one row per bus: index [slack]
#   [generators]   bus alpha beta gamma capacity
#   [lines]        from to reactance capacity     (reactance may be '-')
#   [ptdf]         optional, L rows of N numbers
#
# '#' starts a comment; fields are whitespace or comma separated.
# --------------------------------------------------------------------------

_SECTIONS = ("buses", "generators", "lines", "ptdf")


def _rows(text: str):
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise NetworkError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise NetworkError(f"line {lineno}: data outside any section")
        yield section, lineno, line.replace(",", " ").split()


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise NetworkError(f"line {lineno}: expected a number, got {tok!r}") from None


def parse_network(text: str, name: str = "network") -> Network:
    buses, gens, lines, ptdf_rows = [], {}, [], []
    slack = None
    for section, lineno, f in _rows(text):
        if section == "buses":
            idx = int(_num(f[0], lineno)) - 1
            buses.append(idx)
            if len(f) > 1 and f[1].lower() == "slack":
                slack = idx
        elif section == "generators":
            if len(f) != 5:
                raise NetworkError(f"line {lineno}: generator rows need 5 fields")
            bus = int(_num(f[0], lineno)) - 1
            if bus in gens:
                raise NetworkError(f"line {lineno}: second generator at bus {bus + 1}")
            a, b, c, cap = (_num(t, lineno) for t in f[1:])
            gens[bus] = GeneratorCost(a, b, c, cap)
        elif section == "lines":
            if len(f) != 4:
                raise NetworkError(f"line {lineno}: line rows need 4 fields")
            x = None if f[2] in ("-", "none") else _num(f[2], lineno)
            lines.append(
                Line(int(_num(f[0], lineno)) - 1, int(_num(f[1], lineno)) - 1,
                     _num(f[3], lineno), x)
            )
        else:
            ptdf_rows.append((lineno, [_num(t, lineno) for t in f]))

    n = len(buses)
    if sorted(buses) != list(range(n)):
        raise NetworkError("buses must be numbered 1..N without gaps")
    if sorted(gens) != list(range(n)):
        missing = sorted(set(range(n)) - set(gens))
        raise NetworkError(f"missing generator at bus(es) {[m + 1 for m in missing]}")
    generators = [gens[i] for i in range(n)]
    slack = 0 if slack is None else slack

    if ptdf_rows:
        for row_idx, (lineno, row) in enumerate(ptdf_rows, start=1):
            if len(row) != n:
                raise NetworkError(
                    f"line {lineno}: ptdf row {row_idx} has {len(row)} entries, expected {n}"
                )
        if len(ptdf_rows) != len(lines):
            raise NetworkError(
                f"ptdf has {len(ptdf_rows)} rows but the network has {len(lines)} lines"
            )
        if any(ln.reactance is not None for ln in lines):
            log.warning("%s: both reactances and [ptdf] given; using the supplied PTDF", name)
        ptdf = np.array([r for _, r in ptdf_rows], dtype=float).reshape(len(lines), n)
        net = Network(n, lines, generators, ptdf, slack, name)
    else:
        net = Network(n, lines, generators, compute_ptdf(lines, n, slack), slack, name)
    problems = validate_network(net)
    if problems:
        raise NetworkError("; ".join(problems))
    return net


def load_network(path) -> Network:
    path = Path(path)
    return parse_network(path.read_text(), name=path.stem)


def format_network(network: Network, include_ptdf: bool = False) -> str:
    out = ["[buses]"]
    for i in range(network.n_buses):
        out.append(f"{i + 1}" + (" slack" if i == network.slack_bus else ""))
    out.append("")
    out.append("[generators]")
    out.append("# bus alpha beta gamma capacity")
    for i, g in enumerate(network.generators):
        out.append(f"{i + 1} {float(g.alpha)!r} {float(g.beta)!r} {float(g.gamma)!r} "
                   f"{float(g.capacity)!r}")
    out.append("")
    out.append("[lines]")
    out.append("# from to reactance capacity")
    for ln in network.lines:
        x = "-" if ln.reactance is None else repr(float(ln.reactance))
        out.append(f"{ln.from_bus + 1} {ln.to_bus + 1} {x} {float(ln.capacity)!r}")
    if include_ptdf:
        out.append("")
        out.append("[ptdf]")
        for row in network.ptdf:
            out.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(out) + "\n"


def random_network(rng, n_buses: int, n_lines: int | None = None,
                   line_capacity=(20.0, 150.0), gen_capacity=(50.0, 300.0),
                   alpha=(0.0118, 0.0684), beta=(150.0, 233.0)) -> Network:
    """Connected random test network: a random spanning tree plus extra branches."""
    if n_buses < 1:
        raise ValueError("need at least one bus")
    pairs = [(i, j) for i in range(n_buses) for j in range(i + 1, n_buses)]
    max_l = len(pairs)
    if n_lines is None:
        n_lines = int(rng.integers(n_buses - 1, max_l + 1)) if n_buses > 1 else 0
    if not n_buses - 1 <= n_lines <= max_l:
        raise ValueError(f"{n_buses} buses support {n_buses - 1}..{max_l} lines")
    order = rng.permutation(n_buses)
    chosen = set()
    for k in range(1, n_buses):
        j = order[int(rng.integers(0, k))]
        chosen.add(tuple(sorted((int(order[k]), int(j)))))
    rest = [p for p in pairs if p not in chosen]
    for idx in rng.permutation(len(rest))[: n_lines - len(chosen)]:
        chosen.add(rest[idx])
    lines = [Line(i, j, float(rng.uniform(*line_capacity)), float(rng.uniform(0.05, 0.3)))
             for i, j in sorted(chosen)]
    gens = [GeneratorCost(float(rng.uniform(*alpha)), float(rng.uniform(*beta)), 0.0,
                          float(rng.uniform(*gen_capacity))) for _ in range(n_buses)]
    return Network.from_reactances(n_buses, lines, gens, 0, f"random{n_buses}")
