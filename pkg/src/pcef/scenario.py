"""Synthetic Gaussian-class scenarios and the end-to-end private fusion pipeline."""
from __future__ import annotations

import csv
import dataclasses
import io
import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .centralized import CcefResult, ccef, dr_fold
from .completion import CompletionParams, RankAdaptiveCompleter, TraceRow
from .edm import credibility_from_edmm
from .errors import ConfigError
from .evidence import Frame, MassFunction, argmax_betp, betp
from .fusion import FusionRun, finalize_fusion, make_noise_schedule, run_fusion
from .network import NetworkGraph, collect_edmm, mh_weights, random_connected_graph
from .secure import PartyHandle, neighbor_edm

AGREEMENT_TOL = 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int = 30
    n_classes: int = 5
    class_means: Tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    class_variance: float = 1.0
    true_class: int = 0
    anomaly_fraction: float = 0.1
    anomaly_mean_indices: Tuple[int, ...] = (3, 4)
    density: float = 0.4
    alpha_mass: float = 0.9
    mode: str = "serial"
    edm_collection: str = "lac"
    secure_edm: bool = True
    completion: CompletionParams = field(default_factory=CompletionParams)
    iter_consen: int = 100
    sigma0: float = 1.0
    rho: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_agents < 2:
            raise ConfigError("n_agents must be at least 2")
        if len(self.class_means) != self.n_classes:
            raise ConfigError(f"{len(self.class_means)} class means for {self.n_classes} classes")
        if self.class_variance <= 0:
            raise ConfigError("class_variance must be positive")
        if not 0 <= self.true_class < self.n_classes:
            raise ConfigError("true_class out of range")
        if not 0 <= self.anomaly_fraction <= 1:
            raise ConfigError("anomaly_fraction must be in [0, 1]")
        if any(not 0 <= k < self.n_classes for k in self.anomaly_mean_indices):
            raise ConfigError("anomaly_mean_indices out of range")
        if self.anomaly_fraction > 0 and not self.anomaly_mean_indices:
            raise ConfigError("anomalies requested but no anomaly classes given")
        if not 0 < self.density <= 1:
            raise ConfigError("density must be in (0, 1]")
        if not 0 <= self.alpha_mass < 1:
            raise ConfigError("alpha_mass must be in [0, 1)")
        if self.mode not in ("serial", "parallel"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.edm_collection not in ("lac", "max"):
            raise ConfigError(f"unknown edm_collection {self.edm_collection!r}")
        if self.iter_consen < 1:
            raise ConfigError("iter_consen must be positive")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must be in (0, 1)")

    @property
    def frame(self) -> Frame:
        return Frame.of_size(self.n_classes)

    @property
    def n_anomalous(self) -> int:
        return int(round(self.anomaly_fraction * self.n_agents))


PROFILES = {
    "desk": {},
    "large": {"n_agents": 100},
}


def profile_config(name: str, **overrides) -> ScenarioConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}")
    return ScenarioConfig(**{**PROFILES[name], **overrides})


# -- config file -------------------------------------------------------------

_TUPLE_FLOAT = {"class_means"}
_TUPLE_INT = {"anomaly_mean_indices"}


def _coerce(kind, raw: str):
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def parse_config(text: str, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Parse flat ``key = value`` lines; ``completion.<name>`` sets completion parameters.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    base = base or ScenarioConfig()
    top = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    comp = {f.name: f for f in dataclasses.fields(CompletionParams)}
    values: Dict[str, object] = {}
    comp_values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("completion."):
                name = key[len("completion."):]
                if name not in comp:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                comp_values[name] = _coerce(type(getattr(base.completion, name)), raw)
            elif key in _TUPLE_FLOAT:
                values[key] = tuple(float(v) for v in raw.split(",") if v.strip())
            elif key in _TUPLE_INT:
                values[key] = tuple(int(v) for v in raw.split(",") if v.strip())
            elif key in top and key != "completion":
                values[key] = _coerce(type(getattr(base, key)), raw)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        completion = dataclasses.replace(base.completion, **comp_values)
        return dataclasses.replace(base, completion=completion, **values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def config_to_text(cfg: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(ScenarioConfig):
        v = getattr(cfg, f.name)
        if f.name == "completion":
            for g in dataclasses.fields(CompletionParams):
                lines.append(f"completion.{g.name} = {getattr(v, g.name)!r}")
        elif isinstance(v, tuple):
            lines.append(f"{f.name} = {','.join(repr(x) for x in v)}")
        elif isinstance(v, str):
            lines.append(f"{f.name} = {v}")
        else:
            lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"


# -- scenario generation -----------------------------------------------------

def observation_to_bba(x: float, cfg: ScenarioConfig) -> MassFunction:
    """Singleton masses proportional to class likelihoods, remainder on the frame."""
    frame = cfg.frame
    sd = np.sqrt(cfg.class_variance)
    logl = norm.logpdf(x, loc=np.asarray(cfg.class_means), scale=sd)
    p = np.exp(logl - logl.max())
    p /= p.sum()
    masses = np.zeros(frame.size)
    masses[1 << np.arange(frame.n)] = cfg.alpha_mass * p
    masses[frame.omega] += 1.0 - cfg.alpha_mass
    return MassFunction(frame, masses)


@dataclass(frozen=True)
class Scenario:
    graph: NetworkGraph
    evidence: Tuple[MassFunction, ...]
    truth: int               # 1-based class index
    observations: np.ndarray
    anomalous: np.ndarray    # boolean per agent


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    names = ("graph", "obs", "noise", "protocol")
    return dict(zip(names, (np.random.default_rng(s) for s in ss.spawn(len(names)))))


def generate_scenario(cfg: ScenarioConfig, seed: Optional[int] = None) -> Scenario:
    seed = cfg.seed if seed is None else seed
    rng = _streams(seed)
    g = random_connected_graph(cfg.n_agents, cfg.density, rng["graph"])
    sd = np.sqrt(cfg.class_variance)
    means = np.full(cfg.n_agents, cfg.class_means[cfg.true_class])
    anomalous = np.zeros(cfg.n_agents, dtype=bool)
    k = cfg.n_anomalous
    if k:
        # Like the reference setup, the trailing agents are the abnormal ones.
        anomalous[-k:] = True
        picks = rng["obs"].choice(np.asarray(cfg.anomaly_mean_indices), size=k)
        means[-k:] = np.asarray(cfg.class_means)[picks]
    obs = means + sd * rng["obs"].standard_normal(cfg.n_agents)
    evidence = tuple(observation_to_bba(x, cfg) for x in obs)
    return Scenario(g, evidence, cfg.true_class + 1, obs, anomalous)


def table3_evidence() -> Tuple[MassFunction, ...]:
    """Nine supportive pieces on ``a`` plus one dogmatic piece on ``b``."""
    frame = Frame(("a", "b"))
    good = MassFunction.from_focal(frame, {"a": 0.9, frame.omega: 0.1})
    bad = MassFunction.from_focal(frame, {"b": 1.0})
    return (good,) * 9 + (bad,)


# -- pipeline ----------------------------------------------------------------

@dataclass
class RunResult:
    cred_pcef: np.ndarray
    cred_ccef: np.ndarray
    fused_pcef: MassFunction
    fused_ccef: MassFunction
    fused_dr: Optional[MassFunction]
    agent_masses: List[MassFunction]
    rank_trace: List[TraceRow]
    final_rank: int
    decisions: Dict[str, int]
    truth: Optional[int]
    timings: Dict[str, float]
    fusion: FusionRun
    completed: np.ndarray
    collected: np.ndarray
    mask: np.ndarray
    graph: NetworkGraph
    ccef_result: CcefResult

    @property
    def cred_error(self) -> np.ndarray:
        return np.abs(self.cred_pcef - self.cred_ccef)

    @property
    def betp_error(self) -> float:
        return float(np.max(np.abs(betp(self.fused_pcef) - betp(self.fused_ccef))))


def neighbor_edmm(evidence: Sequence[MassFunction], g: NetworkGraph, rng: np.random.Generator,
                  secure: bool = True) -> np.ndarray:
    """Run the two-party protocol on every edge; returns the edge-masked EDMM."""
    from .edm import dismp

    n = g.n_agents
    d = np.zeros((n, n))
    for i, j in g.edges():
        if secure:
            s1, s2, s3 = (int(v) for v in rng.integers(0, 2**63, size=3))
            a = PartyHandle(i, evidence[i], s1)
            b = PartyHandle(j, evidence[j], s2)
            d[i, j] = d[j, i] = neighbor_edm(a, b, True, dealer=random.Random(s3))
        else:
            d[i, j] = d[j, i] = dismp(evidence[i], evidence[j])
    return d


def _completion_schedules(collected: np.ndarray, masks: np.ndarray, params: CompletionParams):
    """Complete each distinct agent input once; identical inputs give identical outputs."""
    cache = {}
    per_agent = []
    for i in range(collected.shape[0]):
        key = (collected[i].tobytes(), masks[i].tobytes())
        if key not in cache:
            comp = RankAdaptiveCompleter(collected[i], masks[i], params)
            creds = [credibility_from_edmm(comp.current())]
            while comp.step():
                creds.append(credibility_from_edmm(comp.current()))
            cache[key] = (comp, np.array(creds))
        per_agent.append(cache[key])
    return per_agent


def sample_stop_times(n_agents: int, params: CompletionParams, iter_consen: int,
                      rng: np.random.Generator) -> np.ndarray:
    lo = params.iter_ra + 1
    hi = params.iter_ra + iter_consen  # exclusive
    if hi <= lo:
        return np.full(n_agents, lo)
    return rng.integers(lo, hi, size=n_agents)


def run_pcef_on(evidence: Sequence[MassFunction], g: NetworkGraph, cfg: ScenarioConfig,
                seed: Optional[int] = None, truth: Optional[int] = None,
                noise: bool = True, noise_seed: Optional[int] = None) -> RunResult:
    """Full private pipeline on given evidence and graph, plus both references.

    ``noise_seed`` replaces only the privacy-noise stream, leaving everything
    else identical; ``noise=False`` switches the noise off.
    """
    seed = cfg.seed if seed is None else seed
    rng = _streams(seed)
    if noise_seed is not None:
        rng["noise"] = np.random.default_rng(np.random.SeedSequence([noise_seed, 0x6E6F]))
    frame = evidence[0].frame
    n_agents = len(evidence)
    timings = {}

    t0 = time.perf_counter()
    d_edges = neighbor_edmm(evidence, g, rng["protocol"], cfg.secure_edm)
    timings["neighbor_edm"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    local = np.stack([np.where(g.local_adjacency(i), d_edges, 0.0) for i in range(n_agents)])
    c = mh_weights(g)
    collected = collect_edmm(local, g, cfg.edm_collection, cfg.iter_consen, c)
    timings["collection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    per_agent = _completion_schedules(collected.values, collected.masks, cfg.completion)
    timings["completion"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    # Agent i only ever uses its own credibility.
    final_creds = np.array([pa[1][-1, i] for i, pa in enumerate(per_agent)])
    if cfg.mode == "serial":
        creds = final_creds[None, :]
    else:
        length = max(pa[1].shape[0] for pa in per_agent)
        creds = np.empty((length, n_agents))
        for i, pa in enumerate(per_agent):
            hist = pa[1][:, i]
            creds[:, i] = np.concatenate([hist, np.full(length - len(hist), hist[-1])])
    r = frame.size - 2
    t_i = sample_stop_times(n_agents, cfg.completion, cfg.iter_consen, rng["noise"])
    if noise:
        schedules = [make_noise_schedule(int(t), cfg.sigma0, cfg.rho, r, rng["noise"]) for t in t_i]
    else:
        schedules = [None] * n_agents
    rounds = int(t_i.max()) + cfg.iter_consen
    run = run_fusion(evidence, c, creds, schedules, rounds)
    masses = finalize_fusion(run.final, frame)
    timings["fusion"] = time.perf_counter() - t0

    spread = max(float(np.max(np.abs(m.masses - masses[0].masses))) for m in masses)
    if spread > AGREEMENT_TOL:
        raise AssertionError(f"agents disagree on the fused mass by {spread:.3e}")

    t0 = time.perf_counter()
    ref = ccef(evidence)
    try:
        dr = dr_fold(evidence)
    except ArithmeticError:
        dr = None
    timings["reference"] = time.perf_counter() - t0

    # Agent 0's view; every agent completes the same collected matrix.
    comp0 = per_agent[0][0]
    decisions = {"pcef": argmax_betp(betp(masses[0])), "ccef": argmax_betp(betp(ref.fused))}
    if dr is not None:
        decisions["dr"] = argmax_betp(betp(dr))
    rank = comp0.run().rank
    return RunResult(
        cred_pcef=final_creds,
        cred_ccef=ref.credibilities, fused_pcef=masses[0], fused_ccef=ref.fused, fused_dr=dr,
        agent_masses=masses, rank_trace=list(comp0.trace), final_rank=rank,
        decisions=decisions, truth=truth, timings=timings, fusion=run,
        completed=comp0.current(), collected=collected.values[0], mask=collected.masks[0],
        graph=g, ccef_result=ref)


def run_pcef(cfg: ScenarioConfig, seed: Optional[int] = None, noise: bool = True,
             noise_seed: Optional[int] = None) -> RunResult:
    seed = cfg.seed if seed is None else seed
    sc = generate_scenario(cfg, seed)
    return run_pcef_on(sc.evidence, sc.graph, cfg, seed, truth=sc.truth, noise=noise,
                       noise_seed=noise_seed)


# -- Monte Carlo -------------------------------------------------------------

@dataclass
class MonteCarloSummary:
    trial_rows: List[dict]
    aggregate: Dict[str, float]
    timings: Dict[str, float]


def run_monte_carlo(cfg: ScenarioConfig, trials: int, seed: Optional[int] = None) -> MonteCarloSummary:
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    base = cfg.seed if seed is None else seed
    rows, timing_sum = [], {}
    for k in range(trials):
        res = run_pcef(cfg, base + k)
        row = {
            "trial": k,
            "seed": base + k,
            "truth": res.truth,
            "decision_pcef": res.decisions["pcef"],
            "decision_ccef": res.decisions["ccef"],
            "decision_dr": res.decisions.get("dr", 0),
            "betp_error": res.betp_error,
            "max_cred_error": float(res.cred_error.max()),
            "mean_cred_error": float(res.cred_error.mean()),
            "final_rank": res.final_rank,
        }
        rows.append(row)
        for name, v in res.timings.items():
            timing_sum[name] = timing_sum.get(name, 0.0) + v
    agg = {
        "trials": trials,
        "accuracy_pcef": float(np.mean([r["decision_pcef"] == r["truth"] for r in rows])),
        "accuracy_ccef": float(np.mean([r["decision_ccef"] == r["truth"] for r in rows])),
        "accuracy_dr": float(np.mean([r["decision_dr"] == r["truth"] for r in rows])),
        "agreement_pcef_ccef": float(np.mean([r["decision_pcef"] == r["decision_ccef"] for r in rows])),
        "mean_betp_error": float(np.mean([r["betp_error"] for r in rows])),
        "max_betp_error": float(np.max([r["betp_error"] for r in rows])),
        "frac_betp_error_le_0.02": float(np.mean([r["betp_error"] <= 0.02 for r in rows])),
        "mean_cred_error": float(np.mean([r["mean_cred_error"] for r in rows])),
        "max_cred_error": float(np.max([r["max_cred_error"] for r in rows])),
    }
    timings = {name: v / trials for name, v in timing_sum.items()}
    return MonteCarloSummary(rows, agg, timings)


# -- CSV writers -------------------------------------------------------------

def _write(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def credibility_csv(res: RunResult) -> str:
    rows = [(i, repr(float(a)), repr(float(b)), repr(float(abs(a - b))))
            for i, (a, b) in enumerate(zip(res.cred_pcef, res.cred_ccef))]
    return _write(rows, ["agent", "cred_pcef", "cred_ccef", "abs_error"])


def fusion_csv(res: RunResult) -> str:
    dr = res.fused_dr.masses if res.fused_dr is not None else np.full(res.fused_pcef.frame.size, np.nan)
    rows = [(mask, repr(float(a)), repr(float(b)), repr(float(c)))
            for mask, (a, b, c) in enumerate(zip(res.fused_pcef.masses, res.fused_ccef.masses, dr))
            if mask > 0]
    return _write(rows, ["subset_bitmask", "mass_pcef", "mass_ccef", "mass_dr"])


def rank_trace_csv(trace: Sequence[TraceRow]) -> str:
    return _write([(r.iteration, r.rank, repr(r.objective)) for r in trace], ["iter", "rank", "objective"])


def decisions_csv(rows: Sequence[dict]) -> str:
    out = []
    for r in rows:
        for method in ("pcef", "ccef", "dr"):
            d = r[f"decision_{method}"]
            out.append((r["trial"], method, d, r["truth"], int(d == r["truth"])))
    return _write(out, ["trial", "method", "decision", "truth", "correct"])


def trials_csv(rows: Sequence[dict]) -> str:
    header = list(rows[0].keys())
    return _write([[_fmt(r[h]) for h in header] for r in rows], header)


def aggregate_csv(agg: Dict[str, float]) -> str:
    return _write([(k, _fmt(v)) for k, v in agg.items()], ["metric", "value"])


def timings_csv(timings: Dict[str, float]) -> str:
    return _write([(k, repr(v)) for k, v in timings.items()], ["stage", "seconds"])
