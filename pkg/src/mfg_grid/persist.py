"""Scenario loading and results persistence.

A scenario file is JSON with four sections::

    {"name": ..., "network": "ieee14.net", "load_shape": "load_shape.csv",
     "market": {...}, "config": {...}}

``network`` and ``load_shape`` are paths relative to the scenario file.  The
config echo written with every run inlines both (``network_text`` and
``load_shape_rows``) so it loads back without the original files.

All numeric tables are comma-separated with 17 significant digits, so values
round-trip exactly and byte-identical inputs give byte-identical files.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .grid_model import Network, format_network, parse_network
from .metrics import belief_relative_error, imv, summarize
from .simulate import MarketParams, ScenarioConfig, ShockEvent, SimulationLog, make_agent_types

log = logging.getLogger(__name__)

BASELINE = "ieee14_baseline"
PRESETS = {
    "mf-shock-info": "mf_with_shock_info",
    "mf-no-shock-info": "mf_without_shock_info",
    "no-learning": "no_learning_no_battery",
}
DESK_AGENTS_PER_NODE = 200
FMT = "%.17g"
# execution settings that never change results; kept out of the config echo
RUNTIME_KEYS = ("threads", "chunk_size")


class LoadShapeError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


# ------------------------------------------------------------- load shapes ----

def parse_load_shape(text: str, hours: int = 24, tol: float = 1e-4):
    """Return ``(gross, net)`` from ``hour,gross_load_fraction,net_load_fraction`` rows.

    Gross is rescaled to a daily mean of exactly 1 after checking it is
    already within ``tol`` of 1; net is scaled by the same factor.
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise LoadShapeError("load shape is empty")
    head_no, head = lines[0]
    cols = [c.strip() for c in head.split(",")]
    want = ["hour", "gross_load_fraction", "net_load_fraction"]
    if cols != want:
        raise LoadShapeError(f"line {head_no}: header must be {','.join(want)}")
    seen = {}
    for lineno, ln in lines[1:]:
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 3:
            raise LoadShapeError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            h = int(parts[0])
            g, n = float(parts[1]), float(parts[2])
        except ValueError:
            raise LoadShapeError(f"line {lineno}: malformed number") from None
        if not (np.isfinite(g) and np.isfinite(n)):
            raise LoadShapeError(f"line {lineno}: fractions must be finite")
        if not 1 <= h <= hours:
            raise LoadShapeError(f"line {lineno}: hour {h} outside 1..{hours}")
        if h in seen:
            raise LoadShapeError(f"line {lineno}: hour {h} repeated")
        seen[h] = (g, n)
    if len(seen) != hours:
        missing = sorted(set(range(1, hours + 1)) - set(seen))
        raise LoadShapeError(f"load shape needs {hours} rows; missing hours {missing}")
    arr = np.array([seen[h] for h in range(1, hours + 1)])
    gross, net = arr[:, 0], arr[:, 1]
    m = gross.mean()
    if abs(m - 1.0) > tol:
        raise LoadShapeError(f"gross load fractions must average 1 (mean is {m:.6f})")
    return gross / m, net / m


def format_load_shape(gross, net) -> str:
    rows = ["hour,gross_load_fraction,net_load_fraction"]
    for h, (g, n) in enumerate(zip(gross, net), start=1):
        rows.append(f"{h},{float(g)!r},{float(n)!r}")
    return "\n".join(rows) + "\n"


# --------------------------------------------------------------- scenarios ----

@dataclass
class Scenario:
    name: str
    network: Network
    types: list
    config: ScenarioConfig
    market: MarketParams
    gross: np.ndarray
    net: np.ndarray
    warnings: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.network, self.types, self.config))

    def echo(self) -> dict:
        """Self-contained, lossless description of the scenario."""
        cfg = self.config.to_dict()
        for k in RUNTIME_KEYS:
            cfg.pop(k, None)
        return {
            "name": self.name,
            "network_text": format_network(self.network),
            "load_shape_rows": [[float(g), float(n)] for g, n in zip(self.gross, self.net)],
            "market": self.market.to_dict(),
            "config": cfg,
        }


def _data_path(name: str) -> Path:
    return Path(str(resources.files("mfg_grid") / "data" / name))


def resolve_scenario_path(name: str | Path | None) -> tuple[Path, str | None]:
    """Map a preset name, bundled scenario name or file path to a file and mode."""
    if name is None:
        return _data_path(BASELINE + ".json"), None
    s = str(name)
    if s in PRESETS:
        return _data_path(BASELINE + ".json"), PRESETS[s]
    if s == BASELINE:
        return _data_path(BASELINE + ".json"), None
    p = Path(s)
    if not p.exists():
        raise ScenarioError(f"scenario {s!r} is neither a preset ({', '.join(PRESETS)}) "
                            f"nor an existing file")
    return p, None


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def scenario_from_dict(doc: dict, base: Path | None = None, overrides: dict | None = None,
                       name: str | None = None) -> Scenario:
    known = {"name", "network", "network_text", "load_shape", "load_shape_rows", "market",
             "config"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    base = base or Path(".")
    if "network_text" in doc:
        network = parse_network(doc["network_text"], doc.get("name", "network"))
    elif "network" in doc:
        p = base / doc["network"]
        network = parse_network(p.read_text(), p.stem)
    else:
        raise ScenarioError("scenario needs 'network' or 'network_text'")
    cfg_d = dict(doc.get("config", {}))
    cfg_d.update(overrides or {})
    try:
        config = ScenarioConfig.from_dict(cfg_d)
    except TypeError as exc:
        raise ScenarioError(f"config: {exc}") from None
    H = config.hours_per_day
    if "load_shape_rows" in doc:
        arr = np.asarray(doc["load_shape_rows"], dtype=float)
        if arr.shape != (H, 2):
            raise ScenarioError(f"load_shape_rows must be {H} pairs")
        gross, net = arr[:, 0].copy(), arr[:, 1].copy()
    elif "load_shape" in doc:
        gross, net = parse_load_shape((base / doc["load_shape"]).read_text(), H)
    else:
        raise ScenarioError("scenario needs 'load_shape' or 'load_shape_rows'")
    market = MarketParams.from_dict(doc.get("market", {}))
    config.validate()
    types = make_agent_types(network, gross, net, market, config)
    return Scenario(name or doc.get("name", "scenario"), network, types, config, market,
                    gross, net)


def load_scenario(paths=None, overrides: dict | None = None) -> Scenario:
    """Load a scenario from a preset name, bundled name or JSON path.

    ``overrides`` are ScenarioConfig fields applied after the file's config.
    The result unpacks as ``network, types, config``.
    """
    path, mode = resolve_scenario_path(paths)
    doc = _read_json(path)
    ov = {} if mode is None else {"mode": mode}
    ov.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return scenario_from_dict(doc, path.parent, ov)


def config_hash(echo: dict) -> str:
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ----------------------------------------------------------------- writing ----

def _write_table(path: Path, header: list, rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    rows = np.asarray(rows)
    if rows.size:
        np.savetxt(buf, rows, fmt=FMT, delimiter=",")
    path.write_text(buf.getvalue())


def _write_text(path: Path, text: str) -> None:
    path.write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _day_hour(D, H):
    d, h = np.meshgrid(np.arange(D), np.arange(H), indexing="ij")
    return d.ravel() + 1, h.ravel() + 1


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str
    started: str
    finished: str
    files: dict  # name -> sha256
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "code_version": self.code_version,
            "started": self.started,
            "finished": self.finished,
            "threads": self.threads,
            "files": dict(sorted(self.files.items())),
            **self.extra,
        }

    def verify(self, outdir) -> list[str]:
        """Names of files whose checksum no longer matches."""
        bad = []
        for name, digest in self.files.items():
            p = Path(outdir) / name
            if not p.exists() or sha256_file(p) != digest:
                bad.append(name)
        return bad


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


LOG_ARRAYS = ("B", "lmp", "lam", "g", "infeasible", "licq", "breach", "shock_mag",
              "agent_cost", "agent_type", "belief_err", "profiles", "probe_index", "probe_bus",
              "probe_belief", "probe_day_beliefs", "probe_q", "probe_bid", "probe_soc",
              "probe_action", "probe_capacity", "vf_solves", "regen")


def save_log_arrays(path: Path, lg: SimulationLog) -> None:
    """npz archive with fixed member timestamps (byte-stable across runs)."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in LOG_ARRAYS:
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(getattr(lg, name)),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def emit_results(lg: SimulationLog, metrics, outdir, scenario: Scenario | None = None,
                 window: int = 10, bus: int = 2) -> RunManifest:
    """Write all run tables plus summary and manifest into ``outdir``."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory ({exc.strerror})") from exc
    D, H, N = lg.lmp.shape
    day, hour = _day_hour(D, H)
    buses = [f"bus_{n + 1}" for n in range(N)]

    # (a) nodal prices
    _write_table(out / "lmp.csv", ["day", "hour", *buses, "infeasible"],
                 np.column_stack([day, hour, lg.lmp.reshape(D * H, N),
                                  lg.infeasible.ravel().astype(int)]) if D else [])
    # (b) probe belief error, one probe per bus
    P = lg.probe_index.size
    if D and P:
        realized = lg.lmp[:, :, lg.probe_bus]  # (D, H, P)
        err, small = belief_relative_error(lg.probe_belief, realized)
        cols = np.column_stack([day, hour, err.reshape(D * H, P),
                                small.reshape(D * H, P).any(axis=1).astype(int)])
    else:
        cols, small = [], np.zeros(0, bool)
    _write_table(out / "belief_error.csv",
                 ["day", "hour", *[f"bus_{b + 1}" for b in lg.probe_bus], "flagged"], cols)
    # (c) IMV per bus over the window
    w = min(window, D)
    rows = []
    if w * H >= 2:
        rows = [[n + 1, imv(lg.lmp[-w:, :, n]), w] for n in range(N)]
    _write_table(out / "imv.csv", ["bus", "imv", "window_days"], rows)
    # (d) daily costs split by agent kind
    storage = np.array([t.has_storage for t in lg.types])[lg.agent_type] \
        if len(lg.types) else np.zeros(0, bool)
    if D:
        tot = lg.agent_cost.sum(axis=0)
        pro = lg.agent_cost[storage].sum(axis=0)
        con = lg.agent_cost[~storage].sum(axis=0)
        rows = np.column_stack([np.arange(1, D + 1), tot, con, pro])
    else:
        rows = []
    _write_table(out / "daily_cost.csv", ["day", "total", "consumers", "prosumers"], rows)
    # (e) population profiles, non-empty cells only
    if D:
        idx = np.nonzero(lg.profiles)
        st = np.array([i for i, t in enumerate(lg.types) if t.has_storage])
        rows = np.column_stack([idx[0] + 1, st[idx[1]] + 1 if st.size else idx[1], idx[2] + 1,
                                idx[3], idx[4], lg.profiles[idx]])
    else:
        rows = []
    _write_table(out / "profiles.csv",
                 ["day", "type", "hour", "soc_bin", "action_bin", "count"], rows)
    # (f) shock events
    lines = ["kind,day,hours,magnitude"]
    for ev in lg.shocks:
        hrs = " ".join(str(h + 1) for h in ev.hours)
        lines.append(f"{ev.kind},{ev.day + 1},{hrs},{ev.magnitude!r}")
    _write_text(out / "shocks.csv", "\n".join(lines) + "\n")

    # config echo, run log, summary
    echo = scenario.echo() if scenario is not None else {"config": {
        k: v for k, v in lg.config.to_dict().items() if k not in RUNTIME_KEYS}}
    _write_text(out / "config.json", _json(echo))
    save_log_arrays(out / "log.npz", lg)
    summary = summarize(lg, bus, w) if D else {"bus": bus + 1, "window_days": 0}
    summary.update({
        "mode": lg.config.mode,
        "seed": lg.config.seed,
        "days": D,
        "agents": int(lg.agent_type.size),
        "flagged_belief_entries": int(np.count_nonzero(small)),
        "shock_events": len(lg.shocks),
        "metrics": {m.name: {"unit": m.unit, "index": m.index, "values": m.values.tolist()}
                    for m in metrics},
    })
    _write_text(out / "summary.json", _json(summary))

    names = ["lmp.csv", "belief_error.csv", "imv.csv", "daily_cost.csv", "profiles.csv",
             "shocks.csv", "config.json", "log.npz", "summary.json"]
    files = {n: sha256_file(out / n) for n in names}
    finished = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    man = RunManifest(config_hash(echo), int(lg.config.seed), __version__, started, finished,
                      files, int(lg.config.threads),
                      {"run_seconds": lg.timings.get("run_seconds"),
                       "config": echo["config"]})
    _write_text(out / "manifest.json", _json(man.to_dict()))
    return man


# ----------------------------------------------------------------- reading ----

def load_run(outdir):
    """Rebuild a SimulationLog from a results directory written by emit_results."""
    out = Path(outdir)
    try:
        doc = json.loads((out / "config.json").read_text())
        arrays = np.load(out / "log.npz", allow_pickle=False)
    except OSError as exc:
        raise OSError(f"{out}: cannot read run ({exc})") from exc
    sc = scenario_from_dict(doc)
    kw = {k: arrays[k] for k in LOG_ARRAYS}
    shocks = []
    for ln in (out / "shocks.csv").read_text().splitlines()[1:]:
        kind, d, hrs, mag = ln.split(",")
        shocks.append(ShockEvent(kind, int(d) - 1, tuple(int(h) - 1 for h in hrs.split()),
                                 float(mag)))
    lg = SimulationLog(config=sc.config, network=sc.network, types=sc.types, shocks=shocks,
                       **kw)
    return lg, sc


__all__ = [
    "BASELINE", "PRESETS", "DESK_AGENTS_PER_NODE", "Scenario", "RunManifest",
    "LoadShapeError", "ScenarioError", "parse_load_shape", "format_load_shape",
    "load_scenario", "scenario_from_dict", "emit_results", "load_run", "config_hash",
    "sha256_file",
]
