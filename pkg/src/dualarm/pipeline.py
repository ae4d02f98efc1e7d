"""End-to-end pipeline stages behind the command line.

Every stage reads and writes inside one output directory, records digests of
what it wrote in ``manifest.json`` and removes its own partial outputs if it
fails.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from . import __version__
from .dataset import generate_dataset, read_dataset, write_dataset
from .kinematics import KinematicChain, default_chain, load_chain
from .reactive import EpisodeConfig, compute_metrics, run_episode
from .roadmap import build_graph, largest_component, read_graph, write_graph, write_latent_csv
from .scenarios import ScenarioConfig, make_episodes
from .sensors import (
    DEFAULT_LINKS,
    face_extents,
    face_histogram,
    place_sensors,
    read_placement,
    tag_collision_points,
    write_histogram_csv,
    write_placement,
)
from .vae import TrainConfig, VaeModel, config_dict, load_model, save_model, train

log = logging.getLogger(__name__)

STAGES = ("gen-data", "place-sensors", "train-vae", "build-graph", "run-episodes", "bench", "export-plots")


class StageError(RuntimeError):
    pass


@dataclass
class DataSection:
    n_samples: int = 10_000


@dataclass
class SensorSection:
    links: tuple[int, ...] = DEFAULT_LINKS
    min_hits: int = 30
    statistic: str = "mean"
    bins: int = 10


@dataclass
class GraphSection:
    k: int = 8
    n_synthetic: int = 10_000


@dataclass
class EpisodeSection:
    episodes: int = 100
    workers: int = 1
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)


@dataclass
class RunConfig:
    seed: int = 7
    chains: dict = field(default_factory=lambda: {"arm_a": None, "arm_b": None})
    dataset: DataSection = field(default_factory=DataSection)
    sensors: SensorSection = field(default_factory=SensorSection)
    vae: TrainConfig = field(default_factory=TrainConfig)
    graph: GraphSection = field(default_factory=GraphSection)
    episodes: EpisodeSection = field(default_factory=EpisodeSection)

    def to_json(self) -> dict:
        d = asdict(self)
        d["vae"] = config_dict(self.vae)
        d["sensors"]["links"] = list(self.sensors.links)
        return d


def _section(cls, obj: dict, name: str):
    known = {f.name for f in fields(cls)}
    extra = set(obj) - known
    if extra:
        raise ValueError(f"config section {name!r}: unknown keys {sorted(extra)}")
    return cls(**obj)


def config_from_json(obj: dict) -> RunConfig:
    obj = dict(obj)
    known = {f.name for f in fields(RunConfig)}
    extra = set(obj) - known
    if extra:
        raise ValueError(f"unknown config keys {sorted(extra)}")
    cfg = RunConfig()
    if "seed" in obj:
        cfg.seed = int(obj["seed"])
    if "chains" in obj:
        cfg.chains = {**cfg.chains, **obj["chains"]}
    if "dataset" in obj:
        cfg.dataset = _section(DataSection, obj["dataset"], "dataset")
    if "sensors" in obj:
        s = dict(obj["sensors"])
        if "links" in s:
            s["links"] = tuple(s["links"])
        cfg.sensors = _section(SensorSection, s, "sensors")
    if "vae" in obj:
        v = dict(obj["vae"])
        if "hidden" in v:
            v["hidden"] = tuple(v["hidden"])
        cfg.vae = _section(TrainConfig, v, "vae")
    if "graph" in obj:
        cfg.graph = _section(GraphSection, obj["graph"], "graph")
    if "episodes" in obj:
        e = dict(obj["episodes"])
        scen = _section(ScenarioConfig, e.pop("scenario", {}), "episodes.scenario")
        cfg.episodes = _section(EpisodeSection, {**e, "scenario": scen}, "episodes")
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        text = resources.files("dualarm").joinpath("data/default_config.json").read_text()
    else:
        text = Path(path).read_text()
    return config_from_json(json.loads(text))


def load_chains(cfg: RunConfig) -> tuple[KinematicChain, KinematicChain]:
    a, b = cfg.chains.get("arm_a"), cfg.chains.get("arm_b")
    return (load_chain(a) if a else default_chain("arm_1")), (load_chain(b) if b else default_chain("arm_2"))


# --- manifest ----------------------------------------------------------------


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    """``manifest.json`` in the output directory, one entry per stage."""

    def __init__(self, out: Path, cfg: RunConfig, config_path):
        self.path = out / "manifest.json"
        self.out = out
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {"stages": {}}
        self.data["tool_version"] = __version__
        self.data["config_path"] = str(config_path) if config_path else "<default>"
        self.data["config"] = cfg.to_json()
        self.data["seed"] = cfg.seed

    def record(self, stage: str, outputs, volatile=()) -> None:
        rel = lambda p: str(Path(p).relative_to(self.out))  # noqa: E731
        self.data["stages"][stage] = {
            "outputs": {rel(p): digest(p) for p in sorted(outputs)},
            "volatile": {rel(p): digest(p) for p in sorted(volatile)},
        }
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


# --- stages ------------------------------------------------------------------


def _need(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise StageError(f"{stage}: missing input {path} (run {producer} first)")
    return path


class _Outputs(list):
    """Files a stage has started writing; deleted again if the stage fails."""

    def add(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.append(path)
        return path

    def remove_all(self) -> None:
        for p in self:
            if p.exists():
                p.unlink()


def gen_data(cfg: RunConfig, out: Path, outs: _Outputs):
    chain_a, chain_b = load_chains(cfg)
    ds = generate_dataset(chain_a, chain_b, cfg.dataset.n_samples, cfg.seed)
    write_dataset(ds, outs.add(out / "dataset.jsonl"))
    log.info("dataset: %d samples, collision fraction %.4f", len(ds), ds.collision_fraction())
    return list(outs), []


def place_sensor_stage(cfg: RunConfig, out: Path, outs: _Outputs):
    _, chain_b = load_chains(cfg)
    ds = read_dataset(_need(out / "dataset.jsonl", "place-sensors", "gen-data"))
    sc = cfg.sensors
    hits, rejected = tag_collision_points(ds, chain_b, sc.links)
    placements, skipped = place_sensors(hits, chain_b, sc.links, sc.min_hits, sc.statistic)
    if not placements:
        raise StageError(f"place-sensors: no face reached {sc.min_hits} hits")
    write_placement(placements, outs.add(out / "placement.json"))
    for link in sc.links:
        for face in ("+X", "-X", "+Y", "-Y", "+Z", "-Z"):
            if not any(h.link == link and h.face == face for h in hits):
                continue
            counts, _, _ = face_histogram(hits, link, face, face_extents(chain_b, link, face), sc.bins)
            write_histogram_csv(counts, outs.add(out / "histograms" / f"link{link}_{face}.csv"))
    log.info("%d sensors placed, %d faces skipped, %d points rejected", len(placements), len(skipped), rejected)
    return list(outs), []


def train_vae_stage(cfg: RunConfig, out: Path, outs: _Outputs):
    ds = read_dataset(_need(out / "dataset.jsonl", "train-vae", "gen-data"))
    tc = replace(cfg.vae, seed=cfg.seed)
    model = VaeModel.init(seed=tc.seed, hidden=tc.hidden, beta=tc.beta, flag_weight=tc.flag_weight,
                          arm_a_weight=tc.arm_a_weight)
    model, history = train(model, ds, tc)
    save_model(model, outs.add(out / "model.json"))
    with outs.add(out / "loss.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(history):
            w.writerow([i, repr(float(v))])
    return list(outs), []


def build_graph_stage(cfg: RunConfig, out: Path, outs: _Outputs):
    ds = read_dataset(_need(out / "dataset.jsonl", "build-graph", "gen-data"))
    model = load_model(_need(out / "model.json", "build-graph", "train-vae"))
    g = build_graph(model, ds, cfg.graph.k, cfg.graph.n_synthetic, cfg.seed)
    write_graph(g, outs.add(out / "graph.json"))
    write_latent_csv(g, outs.add(out / "latent.csv"))
    return list(outs), []


_WORKER = {}


def _init_worker(graph, placement, chain_a, chain_b, component):
    _WORKER.update(graph=graph, placement=placement, chain_a=chain_a, chain_b=chain_b, component=component)


def _run_one(ec: EpisodeConfig):
    w = _WORKER
    return run_episode(w["graph"], w["placement"], w["chain_a"], w["chain_b"], ec, w["component"])


def run_batch(graph, placement, chain_a, chain_b, configs, component=None, workers: int = 1):
    """Episodes in order; with ``workers > 1`` they run in separate processes over shared inputs."""
    component = component if component is not None else largest_component(graph)
    init = (graph, placement, chain_a, chain_b, component)
    if workers <= 1:
        _init_worker(*init)
        return [_run_one(ec) for ec in configs]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init) as pool:
        return list(pool.map(_run_one, configs))


def episode_inputs(cfg: RunConfig, out: Path, stage: str):
    chain_a, chain_b = load_chains(cfg)
    graph = read_graph(_need(out / "graph.json", stage, "build-graph"))
    placement = read_placement(_need(out / "placement.json", stage, "place-sensors"))
    return graph, placement, chain_a, chain_b, largest_component(graph)


def _write_metrics(results, path: Path, timing: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode_id", "success", "reason", "T_motion", "replans", "goals_reached", "steps"])
        for i, r in enumerate(results):
            w.writerow([i, int(r.success), r.reason, repr(r.motion_time), r.replans, r.goals_reached, r.steps])
    with timing.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode_id", "plan_s", "replan_s", "T"])
        for i, r in enumerate(results):
            w.writerow([i, f"{r.plan_time:.6f}", f"{r.replan_time:.6f}", f"{r.total_time:.6f}"])


def summarize(results) -> dict:
    m = compute_metrics(results)
    lat = [x for r in results for x in r.replan_latencies]
    m["median_replan_ms"] = 1000 * statistics.median(lat) if lat else 0.0
    return m


def episodes_for(cfg: RunConfig, graph, component, chain_a, chain_b, mode: str, n: int):
    scen = replace(cfg.episodes.scenario, mode=mode)
    return make_episodes(graph, component, chain_a, chain_b, scen, n, cfg.seed)


def run_episodes_stage(cfg: RunConfig, out: Path, outs: _Outputs, traces: bool = True):
    graph, placement, chain_a, chain_b, comp = episode_inputs(cfg, out, "run-episodes")
    mode = cfg.episodes.scenario.mode
    configs = episodes_for(cfg, graph, comp, chain_a, chain_b, mode, cfg.episodes.episodes)
    results = run_batch(graph, placement, chain_a, chain_b, configs, comp, cfg.episodes.workers)
    root = out / "episodes" / mode
    volatile = []
    for i, (ec, r) in enumerate(zip(configs, results)):
        d = root / f"ep{i:03d}"
        outs.add(d / "episode.json").write_text(json.dumps(ec.to_json(), indent=1) + "\n")
        if traces:
            with outs.add(d / "trace.jsonl").open("w") as fh:
                for rec in r.trace:
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    _write_metrics(results, outs.add(root / "metrics.csv"), outs.add(root / "timing.csv"))
    volatile.append(root / "timing.csv")
    m = summarize(results)
    log.info("mode %s: SR %.1f%%, T_mean %.2f s, %.2f replans/episode", mode, m["SR"], m["T_mean"], m["replans_mean"])
    return [p for p in outs if p not in volatile], volatile


def bench_stage(cfg: RunConfig, out: Path, outs: _Outputs):
    graph, placement, chain_a, chain_b, comp = episode_inputs(cfg, out, "bench")
    volatile = []
    rows = []
    for mode in ("A", "B"):
        configs = episodes_for(cfg, graph, comp, chain_a, chain_b, mode, cfg.episodes.episodes)
        results = run_batch(graph, placement, chain_a, chain_b, configs, comp, cfg.episodes.workers)
        root = out / "bench" / mode
        _write_metrics(results, outs.add(root / "metrics.csv"), outs.add(root / "timing.csv"))
        volatile.append(root / "timing.csv")
        m = summarize(results)
        rows.append({"mode": mode, **m})
        print(f"mode {mode}: episodes {m['episodes']} SR {m['SR']:.1f}% T_mean {m['T_mean']:.2f} s "
              f"replans/episode {m['replans_mean']:.2f} median replan {m['median_replan_ms']:.1f} ms")
    summary = outs.add(out / "bench" / "summary.csv")
    with summary.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    volatile.append(summary)
    return [p for p in outs if p not in volatile], volatile


def export_plots_stage(cfg: RunConfig, out: Path, outs: _Outputs, index: int = 0):
    """Latent path overlay for one episode: initial plan, executed nodes, blacklisted nodes."""
    graph, placement, chain_a, chain_b, comp = episode_inputs(cfg, out, "export-plots")
    mode = cfg.episodes.scenario.mode
    ec = episodes_for(cfg, graph, comp, chain_a, chain_b, mode, index + 1)[index]
    r = run_batch(graph, placement, chain_a, chain_b, [ec], comp)[0]
    plans = [rec for rec in r.trace if rec["kind"] == "plan"]
    executed = []
    for rec in r.trace:
        if rec["kind"] == "step" and rec["phase"] == "move" and (not executed or executed[-1] != rec["from"]):
            executed.append(rec["from"])
    blacklisted = sorted({v for p in plans for v in p["blacklist"]})
    path = outs.add(out / "plots" / f"path_overlay_{mode}{index:03d}.csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "order", "node", "z0", "z1"])
        series = [("initial", plans[0]["path"] if plans else []), ("final", plans[-1]["path"] if plans else []),
                  ("executed", executed), ("blacklisted", blacklisted)]
        for name, nodes in series:
            for i, v in enumerate(nodes):
                w.writerow([name, i, v, repr(float(graph.z[v, 0])), repr(float(graph.z[v, 1]))])
    return list(outs), []


STAGE_FUNCS = {
    "gen-data": gen_data,
    "place-sensors": place_sensor_stage,
    "train-vae": train_vae_stage,
    "build-graph": build_graph_stage,
    "run-episodes": run_episodes_stage,
    "bench": bench_stage,
    "export-plots": export_plots_stage,
}


def run_stage(stage: str, cfg: RunConfig, out, config_path=None, **kw) -> list[Path]:
    """Run one stage; on any error its partial outputs are deleted and the error re-raised."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outs = _Outputs()
    t0 = time.perf_counter()
    try:
        stable, volatile = STAGE_FUNCS[stage](cfg, out, outs, **kw)
    except BaseException:
        outs.remove_all()
        raise
    Manifest(out, cfg, config_path).record(stage, stable, volatile)
    log.info("%s finished in %.1f s", stage, time.perf_counter() - t0)
    return list(outs)
