"""Scenario configuration (YAML) and the realized world it generates."""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from ..channel import STREAM_MOBILITY, STREAM_TRAFFIC, ChannelParams, CycleGeometry, DtCoupling, substream
from ..dtwin import FRAME_S, SatellitePass
from ..grid import GridConfig
from ..phy import PhyParams
from ..planner.config import PlannerConfig
from ..queueing import BITS_PER_MB, TrafficSpec, TrafficTrace, generate_traffic, read_trace

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e3``-style floats (YAML 1.2 behaviour)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*|\.[0-9_]+|[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)$
    |^[-+]?(?:[0-9][0-9_]*)\.[0-9_]*$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$""", re.X),
    list("-+0123456789."),
)


@dataclass(frozen=True)
class MobilitySpec:
    """Uniform drop in a rectangle centred on the origin, then constant velocity.

    ``waypoints`` optionally names a file with rows ``service ue frame x y z``
    (frame counted from 0 over the whole run, warm-up cycle included) that
    overrides the synthetic tracks for the listed UEs.
    """

    area_m: tuple = (600.0, 300.0)
    speed_mps: tuple = (0.0, 1.5)
    height_m: float = 1.5
    waypoints: Optional[str] = None


@dataclass
class Scenario:
    grid: GridConfig
    ap_positions: np.ndarray
    ue_counts: Dict[str, int]
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    satellite: SatellitePass = field(default_factory=SatellitePass)
    channel: ChannelParams = field(default_factory=ChannelParams)
    xi: float = 0.5
    phy: PhyParams = field(default_factory=PhyParams)
    queue_cap_mb: float = 2.0
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    traffic_trace: Optional[str] = None
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    seed: int = 1
    name: str = "scenario"

    def __post_init__(self):
        self.ap_positions = np.asarray(self.ap_positions, dtype=float).reshape(-1, 3)
        if any(int(v) < 0 for v in self.ue_counts.values()):
            raise ValueError("UE counts must be nonnegative")
        if set(self.ue_counts) != {"D", "M", "S"}:
            raise ValueError("ue_counts needs D, M and S entries")
        for p in (self.traffic_trace, self.mobility.waypoints):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(p)

    @property
    def n_ap(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def caps_bits(self) -> Dict[str, float]:
        c = self.queue_cap_mb * BITS_PER_MB
        return {"tn": c, "sat_m": c, "sat_s": c}

    def coupling(self, seed: Optional[int] = None) -> DtCoupling:
        return DtCoupling(xi=self.xi, rng_seed=self.seed if seed is None else seed)

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# YAML mapping


def _dc_from(cls, data: Optional[dict]):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for k, v in list(data.items()):
        if isinstance(v, list):
            data[k] = tuple(v)
    return cls(**data)


def _power_from(d: Optional[dict]) -> PhyParams:
    d = dict(d or {})
    kw = {}
    if "p_max_ap_dbm" in d:
        kw["p_max_ap"] = 10 ** (float(d.pop("p_max_ap_dbm")) / 10) * 1e-3
    if "p_max_sat_dbm" in d:
        kw["p_max_sat"] = 10 ** (float(d.pop("p_max_sat_dbm")) / 10) * 1e-3
    for k in ("gamma0_d_db", "error_prob"):
        if k in d:
            kw[k] = float(d.pop(k))
    if d:
        raise ValueError(f"unknown power keys: {sorted(d)}")
    return PhyParams(**kw)


def scenario_from_dict(cfg: Dict[str, Any], base_dir: Optional[Path] = None) -> Scenario:
    cfg = copy.deepcopy(cfg)
    base_dir = Path(base_dir) if base_dir else Path.cwd()

    def path(p):
        if p is None:
            return None
        q = Path(p)
        return str(q if q.is_absolute() else base_dir / q)

    g = cfg.get("grid", {})
    grid = GridConfig(
        total_bandwidth_hz=float(g.get("total_bandwidth_hz", 15e6)),
        numerologies=dict(g.get("numerologies", {"D": 2, "M": 1, "S": 0})),
        n_frames_per_cycle=int(g.get("n_frames_per_cycle", 5)),
        n_cycles=int(g.get("n_cycles", 20)),
        tn_dl_subframes=int(g.get("tn_dl_subframes", 6)),
    )
    topo = cfg.get("topology", {})
    mob = dict(topo.get("mobility", {}))
    if mob.get("waypoints"):
        mob["waypoints"] = path(mob["waypoints"])
    traffic = dict(cfg.get("traffic", {}))
    trace = path(traffic.pop("trace", None))
    chan = dict(cfg.get("channel", {}))
    xi = float(chan.pop("xi", 0.5))
    return Scenario(
        grid=grid,
        ap_positions=np.asarray(topo.get("ap_positions", [[-150, 0, 10], [150, 0, 10]]), dtype=float),
        ue_counts={x: int(v) for x, v in topo.get("ue_counts", {"D": 2, "M": 2, "S": 1}).items()},
        mobility=_dc_from(MobilitySpec, mob),
        satellite=_dc_from(SatellitePass, cfg.get("satellite")),
        channel=_dc_from(ChannelParams, chan),
        xi=xi,
        phy=_power_from(cfg.get("power")),
        queue_cap_mb=float(cfg.get("queues", {}).get("cap_mb", 2.0)),
        traffic=_dc_from(TrafficSpec, traffic),
        traffic_trace=trace,
        planner=_dc_from(PlannerConfig, cfg.get("planner")),
        seed=int(cfg.get("seed", 1)),
        name=str(cfg.get("name", "scenario")),
    )


def load_scenario(path) -> Scenario:
    """Load a scenario file; bare names resolve to the bundled configs."""
    p = Path(path)
    if not p.exists() and (CONFIG_DIR / f"{path}.yaml").exists():
        p = CONFIG_DIR / f"{path}.yaml"
    with open(p) as fh:
        data = yaml.load(fh, Loader=_Loader) or {}
    return scenario_from_dict(data, base_dir=p.parent)


# ---------------------------------------------------------------------------
# realized world


@dataclass
class World:
    """Realized tracks and traffic for every cycle, warm-up cycle 0 included.

    ``ue_pos[x]`` has shape ``(K_x, n_frames_total, 3)``.
    """

    scenario: Scenario
    seed: int
    ue_pos: Dict[str, np.ndarray]
    ue_vel: Dict[str, np.ndarray]
    traffic: TrafficTrace

    @property
    def n_tf(self) -> int:
        return self.scenario.grid.n_frames_per_cycle

    def geometry(self, cycle: int) -> CycleGeometry:
        sc = self.scenario
        sl = slice(cycle * self.n_tf, (cycle + 1) * self.n_tf)
        frames = np.arange(sl.start, sl.stop) * FRAME_S
        return CycleGeometry(
            sc.ap_positions, {x: p[:, sl, :] for x, p in self.ue_pos.items()}, sc.satellite.position(frames)
        )

    def observed(self, cycle: int):
        """Positions and velocities observed during ``cycle``."""
        sl = slice(cycle * self.n_tf, (cycle + 1) * self.n_tf)
        return ({x: p[:, sl, :] for x, p in self.ue_pos.items()},
                {x: v[:, sl, :] for x, v in self.ue_vel.items()})


def _read_waypoints(path, n_frames: int, k: Dict[str, int]):
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.startswith("#")]
    if rows and rows[0][0] == "service":
        rows = rows[1:]
    tracks: Dict[tuple, Dict[int, np.ndarray]] = {}
    for r in rows:
        svc, ue, fr = r[0], int(r[1]), int(r[2])
        if svc not in k or ue >= k[svc]:
            raise ValueError(f"{path}: unknown UE {svc}{ue}")
        tracks.setdefault((svc, ue), {})[fr] = np.array([float(v) for v in r[3:6]])
    out = {}
    for key, pts in tracks.items():
        fr = np.array(sorted(pts))
        xyz = np.array([pts[f] for f in fr])
        grid_f = np.arange(n_frames)
        out[key] = np.stack([np.interp(grid_f, fr, xyz[:, d]) for d in range(3)], axis=1)
    return out


def build_world(sc: Scenario, seed: Optional[int] = None) -> World:
    seed = sc.seed if seed is None else int(seed)
    g = sc.grid
    n_cycles_total = g.n_cycles + 1
    n_frames = n_cycles_total * g.n_frames_per_cycle
    t = np.arange(n_frames) * FRAME_S
    rng = substream(seed, STREAM_MOBILITY)
    mob = sc.mobility
    ax, ay = mob.area_m
    pos, vel = {}, {}
    for x in ("D", "M", "S"):
        k = sc.ue_counts[x]
        p0 = np.column_stack([rng.uniform(-ax / 2, ax / 2, k), rng.uniform(-ay / 2, ay / 2, k),
                              np.full(k, mob.height_m)])
        speed = rng.uniform(mob.speed_mps[0], mob.speed_mps[1], k)
        head = rng.uniform(0, 2 * np.pi, k)
        v = np.column_stack([speed * np.cos(head), speed * np.sin(head), np.zeros(k)])
        pos[x] = p0[:, None, :] + v[:, None, :] * t[None, :, None]
        vel[x] = np.repeat(v[:, None, :], n_frames, axis=1)
    if mob.waypoints:
        for (x, ue), track in _read_waypoints(mob.waypoints, n_frames, sc.ue_counts).items():
            pos[x][ue] = track
            vel[x][ue] = np.gradient(track, FRAME_S, axis=0) if n_frames > 1 else 0.0
    k = sc.ue_counts
    if sc.traffic_trace:
        traffic = read_trace(sc.traffic_trace, k, g, n_cycles_total)
    else:
        traffic = generate_traffic(sc.traffic, k, g, n_cycles_total, substream(seed, STREAM_TRAFFIC))
    return World(sc, seed, pos, vel, traffic)


def list_configs() -> List[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.yaml"))
