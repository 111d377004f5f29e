"""Run configuration: TOML schema, unit conversion and problem assembly.

Frequencies in the file are in Hz and are converted to rad/s (2 pi Hz) at
load time. Relaxation rates are plain rates in 1/s. Spin indices are
zero-based. See the README for the full key list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python 3.10
    import tomli
import tomli_w

from . import grape, spinop
from .optim import OptimizerConfig
from .penalty import PenaltySpec, PhaseMap

TWO_PI = 2.0 * math.pi

# Magnetogyric ratios in rad s^-1 T^-1 and multiplicities 2I+1
# (IUPAC 2001 recommendations, Harris et al., Pure Appl. Chem. 73, 1795).
ISOTOPES = {
    "1H": (26.7522128e7, 2),
    "13C": (6.728284e7, 2),
    "19F": (25.18148e7, 2),
    "14N": (1.9337792e7, 3),
}

TEMPLATES = ("hcf", "n14", "m2s", "m2s_robust")


class ConfigError(ValueError):
    pass


def hz_to_rad(hz):
    return TWO_PI * np.asarray(hz, dtype=float)


def rad_to_hz(rad):
    return np.asarray(rad, dtype=float) / TWO_PI


def larmor_hz(isotope: str, field_T: float) -> float:
    try:
        gamma = ISOTOPES[isotope][0]
    except KeyError:
        raise ConfigError(f"unknown isotope {isotope!r}; known: {sorted(ISOTOPES)}") from None
    return gamma * field_T / TWO_PI


def ppm_to_hz(ppm, isotope: str, field_T: float):
    return np.asarray(ppm, dtype=float) * 1e-6 * larmor_hz(isotope, field_T)


def hz_to_ppm(hz, isotope: str, field_T: float):
    return np.asarray(hz, dtype=float) / (1e-6 * larmor_hz(isotope, field_T))


# --- schema ---------------------------------------------------------------------

_SYSTEM_KEYS = {"multiplicities", "isotopes", "field_T", "offsets_hz", "offsets_ppm",
                "r1_hz", "r2_hz", "coupling", "quadrupolar"}
_COUPLING_KEYS = {"spins", "j_hz", "weak"}
_QUAD_KEYS = {"spin", "tensor_hz"}
_PROBLEM_KEYS = {"initial", "target", "fidelity", "slices", "duration_s", "power_hz",
                 "controls", "phase_only", "amplitude", "phase_pairs", "initial_scale"}
_ENSEMBLE_KEYS = {"power_factors", "power_weights", "offsets_hz", "offset_weights"}
_OUTPUT_KEYS = {"dir", "convergence", "waveform", "trajectory", "summary", "bundle", "wall_time"}
_PENALTY_KEYS = {"kind", "weight", "order"}
_TOP_KEYS = {"seed", "system", "problem", "ensemble", "optimizer", "penalty", "output"}


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in [{where}]")
    return section[key]


@dataclass
class SystemConfig:
    multiplicities: list
    isotopes: list | None = None
    field_T: float | None = None
    offsets_hz: list | None = None
    offsets_ppm: list | None = None
    r1_hz: float = 0.0
    r2_hz: float = 0.0
    couplings: list = field(default_factory=list)     # (i, j, j_hz, weak)
    quadrupolar: list = field(default_factory=list)   # (spin, 3x3 tensor in Hz)

    def offsets_rad(self) -> np.ndarray:
        n = len(self.multiplicities)
        if self.offsets_ppm is not None:
            hz = [ppm_to_hz(p, iso, self.field_T) for p, iso in zip(self.offsets_ppm, self.isotopes)]
            return hz_to_rad(hz)
        if self.offsets_hz is not None:
            return hz_to_rad(self.offsets_hz)
        return np.zeros(n)

    def build(self) -> spinop.SpinSystem:
        try:
            return spinop.SpinSystem(
                spins=tuple(self.multiplicities),
                offsets=tuple(float(x) for x in self.offsets_rad()),
                j_couplings=tuple(spinop.JCoupling(i, j, float(hz_to_rad(a)), bool(w))
                                  for i, j, a, w in self.couplings),
                quadrupolar=tuple((k, hz_to_rad(v)) for k, v in self.quadrupolar),
                r1=float(self.r1_hz), r2=float(self.r2_hz))
        except spinop.SpinSystemError as err:
            raise ConfigError(f"[system]: {err}") from err


@dataclass
class ProblemConfig:
    initial: list
    target: list
    controls: list
    slices: int
    duration_s: float
    power_hz: float
    fidelity: str = "J1"
    phase_only: bool = False
    amplitude: float = 1.0
    phase_pairs: list | None = None
    initial_scale: float = 1.0     # random start drawn from [-s, s]

    @property
    def dt(self) -> float:
        return self.duration_s / self.slices

    @property
    def power_rad(self) -> float:
        return float(hz_to_rad(self.power_hz))

    def pairs(self) -> list:
        if self.phase_pairs is not None:
            return [tuple(p) for p in self.phase_pairs]
        return [(k, k + 1) for k in range(0, len(self.controls) - 1, 2)]


@dataclass
class EnsembleConfig:
    power_factors: list = field(default_factory=lambda: [1.0])
    power_weights: list | None = None
    offsets_hz: list = field(default_factory=lambda: [0.0])
    offset_weights: list | None = None

    def grid(self):
        pw = self.power_weights or [1.0] * len(self.power_factors)
        ow = self.offset_weights or [1.0] * len(self.offsets_hz)
        return [(wp * wo, f, o) for f, wp in zip(self.power_factors, pw)
                for o, wo in zip(self.offsets_hz, ow)]

    @property
    def trivial(self) -> bool:
        return list(self.power_factors) == [1.0] and list(self.offsets_hz) == [0.0]


@dataclass
class OutputConfig:
    dir: str = "out"
    convergence: str = "convergence.csv"
    waveform: str = "waveform.csv"
    trajectory: str = "trajectory.csv"
    summary: str = "summary.txt"
    bundle: str = "bundle.npz"
    wall_time: bool = False


@dataclass
class RunConfig:
    system: SystemConfig
    problem: ProblemConfig
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    penalties: list = field(default_factory=list)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    def to_dict(self) -> dict:
        s = self.system
        system = {"multiplicities": list(s.multiplicities), "r1_hz": s.r1_hz, "r2_hz": s.r2_hz}
        for key in ("isotopes", "field_T", "offsets_hz", "offsets_ppm"):
            if getattr(s, key) is not None:
                system[key] = getattr(s, key)
        if s.couplings:
            system["coupling"] = [{"spins": [i, j], "j_hz": a, "weak": w} for i, j, a, w in s.couplings]
        if s.quadrupolar:
            system["quadrupolar"] = [{"spin": k, "tensor_hz": np.asarray(v).tolist()}
                                     for k, v in s.quadrupolar]
        p = self.problem
        problem = {"initial": p.initial, "target": p.target, "fidelity": p.fidelity,
                   "slices": p.slices, "duration_s": p.duration_s, "power_hz": p.power_hz,
                   "controls": p.controls, "phase_only": p.phase_only, "amplitude": p.amplitude,
                   "initial_scale": p.initial_scale}
        if p.phase_pairs is not None:
            problem["phase_pairs"] = [list(x) for x in p.phase_pairs]
        e = self.ensemble
        ensemble = {"power_factors": e.power_factors, "offsets_hz": e.offsets_hz}
        if e.power_weights is not None:
            ensemble["power_weights"] = e.power_weights
        if e.offset_weights is not None:
            ensemble["offset_weights"] = e.offset_weights
        out = {"seed": self.seed, "system": system, "problem": problem, "ensemble": ensemble,
               "optimizer": self.optimizer.to_dict(),
               "output": dict(vars(self.output))}
        if self.penalties:
            out["penalty"] = [{"kind": q.kind, "weight": q.weight, "order": q.order}
                              for q in self.penalties]
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


# --- loading ----------------------------------------------------------------------

def _as_list(v, where):
    if isinstance(v, str) or not isinstance(v, (list, tuple)):
        return [v]
    return list(v)


def _parse_system(d: dict) -> SystemConfig:
    _reject_unknown(d, _SYSTEM_KEYS, "system")
    isotopes = d.get("isotopes")
    mults = d.get("multiplicities")
    if mults is None:
        if isotopes is None:
            raise ConfigError("[system] needs 'multiplicities' or 'isotopes'")
        for iso in isotopes:
            if iso not in ISOTOPES:
                raise ConfigError(f"[system].isotopes: unknown isotope {iso!r}")
        mults = [ISOTOPES[i][1] for i in isotopes]
    n = len(mults)
    if isotopes is not None and len(isotopes) != n:
        raise ConfigError("[system].isotopes must have one entry per spin")
    if "offsets_hz" in d and "offsets_ppm" in d:
        raise ConfigError("[system]: give offsets_hz or offsets_ppm, not both")
    for key in ("offsets_hz", "offsets_ppm"):
        if key in d and len(d[key]) != n:
            raise ConfigError(f"[system].{key} must have one entry per spin")
    if "offsets_ppm" in d:
        if isotopes is None or "field_T" not in d:
            raise ConfigError("[system].offsets_ppm needs 'isotopes' and 'field_T'")
        for iso in isotopes:
            if iso not in ISOTOPES:
                raise ConfigError(f"[system].isotopes: unknown isotope {iso!r}")
    couplings = []
    for c in d.get("coupling", []):
        _reject_unknown(c, _COUPLING_KEYS, "system.coupling")
        spins = _require(c, "spins", "system.coupling")
        if len(spins) != 2:
            raise ConfigError("[system.coupling].spins must name two spins")
        couplings.append((int(spins[0]), int(spins[1]), float(_require(c, "j_hz", "system.coupling")),
                          bool(c.get("weak", False))))
    quad = []
    for q in d.get("quadrupolar", []):
        _reject_unknown(q, _QUAD_KEYS, "system.quadrupolar")
        t = np.asarray(_require(q, "tensor_hz", "system.quadrupolar"), dtype=float)
        if t.shape != (3, 3):
            raise ConfigError("[system.quadrupolar].tensor_hz must be 3x3")
        quad.append((int(_require(q, "spin", "system.quadrupolar")), t))
    for key in ("r1_hz", "r2_hz"):
        if float(d.get(key, 0.0)) < 0:
            raise ConfigError(f"[system].{key} must be nonnegative")
    return SystemConfig(list(mults), isotopes, d.get("field_T"), d.get("offsets_hz"),
                        d.get("offsets_ppm"), float(d.get("r1_hz", 0.0)),
                        float(d.get("r2_hz", 0.0)), couplings, quad)


def _parse_problem(d: dict) -> ProblemConfig:
    _reject_unknown(d, _PROBLEM_KEYS, "problem")
    where = "problem"
    p = ProblemConfig(
        initial=_as_list(_require(d, "initial", where), where),
        target=_as_list(_require(d, "target", where), where),
        controls=list(_require(d, "controls", where)),
        slices=_require(d, "slices", where),
        duration_s=float(_require(d, "duration_s", where)),
        power_hz=float(_require(d, "power_hz", where)),
        fidelity=d.get("fidelity", "J1"),
        phase_only=bool(d.get("phase_only", False)),
        amplitude=float(d.get("amplitude", 1.0)),
        phase_pairs=d.get("phase_pairs"),
        initial_scale=float(d.get("initial_scale", 1.0)))
    if not isinstance(p.slices, int) or p.slices < 1:
        raise ConfigError("[problem].slices must be a positive integer")
    if not p.duration_s > 0 or not p.power_hz > 0:
        raise ConfigError("[problem].duration_s and power_hz must be positive")
    if not p.initial_scale > 0:
        raise ConfigError("[problem].initial_scale must be positive")
    if len(p.initial) != len(p.target):
        raise ConfigError("[problem]: initial and target lists must have equal length")
    if p.fidelity not in grape.FIDELITY_KINDS:
        raise ConfigError(f"[problem].fidelity must be one of {grape.FIDELITY_KINDS}")
    if not p.controls:
        raise ConfigError("[problem].controls must list at least one operator")
    if p.phase_only and not p.pairs():
        raise ConfigError("[problem].phase_only needs at least one (x, y) channel pair")
    if p.phase_only and not p.amplitude > 0:
        raise ConfigError("[problem].amplitude must be positive for phase-only runs")
    return p


def _parse_ensemble(d: dict) -> EnsembleConfig:
    _reject_unknown(d, _ENSEMBLE_KEYS, "ensemble")
    e = EnsembleConfig(list(d.get("power_factors", [1.0])), d.get("power_weights"),
                       list(d.get("offsets_hz", [0.0])), d.get("offset_weights"))
    for vals, w, name in ((e.power_factors, e.power_weights, "power"),
                          (e.offsets_hz, e.offset_weights, "offset")):
        if not vals:
            raise ConfigError(f"[ensemble]: empty {name} grid")
        if w is not None and (len(w) != len(vals) or any(x <= 0 for x in w)):
            raise ConfigError(f"[ensemble].{name}_weights must be positive, one per grid point")
    if any(f <= 0 for f in e.power_factors):
        raise ConfigError("[ensemble].power_factors must be positive")
    return e


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"parse error: {err}") from err
    _reject_unknown(raw, _TOP_KEYS, "top level")
    system = _parse_system(_require(raw, "system", "top level"))
    problem = _parse_problem(_require(raw, "problem", "top level"))
    ensemble = _parse_ensemble(raw.get("ensemble", {}))
    try:
        optimizer = OptimizerConfig.from_dict(raw.get("optimizer", {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[optimizer]: {err}") from err
    penalties = []
    for q in raw.get("penalty", []):
        _reject_unknown(q, _PENALTY_KEYS, "penalty")
        try:
            penalties.append(PenaltySpec(_require(q, "kind", "penalty"), float(q.get("weight", 1.0)),
                                         int(q.get("order", 1))))
        except ValueError as err:
            raise ConfigError(f"[penalty]: {err}") from err
    out = raw.get("output", {})
    _reject_unknown(out, _OUTPUT_KEYS, "output")
    output = OutputConfig(**out)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    cfg = RunConfig(system, problem, optimizer, ensemble, penalties, output, seed,
                    base_dir or Path.cwd())
    build_members(cfg)  # validates operator and state specs against the spin system
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


def template_path(name: str) -> Path:
    if name not in TEMPLATES:
        raise ConfigError(f"unknown template {name!r}; available: {TEMPLATES}")
    return Path(str(resources.files("newtongrape") / "templates" / f"{name}.toml"))


def load_template(name: str) -> RunConfig:
    return load_config(template_path(name))


# --- assembly ---------------------------------------------------------------------

def _lz_total(system: spinop.SpinSystem) -> np.ndarray:
    return sum(spinop.composite_operator(system, [(k, "z")]) for k in range(len(system.spins)))


def build_members(cfg: RunConfig):
    """``[(weight, ControlProblem)]`` for every ensemble grid point, weights normalized."""
    system = cfg.system.build()
    p = cfg.problem
    try:
        rho0 = [spinop.state_builder(system, s) for s in p.initial]
        sigma = [spinop.state_builder(system, s) for s in p.target]
        ham = []
        for spec in p.controls:
            name, spins = spinop.parse_state_spec(spec)
            if name not in ("Lx", "Ly", "Lz"):
                raise spinop.SpinSystemError(f"control operators must be Lx/Ly/Lz, got {spec!r}")
            ham.append(spinop.state_operator(system, name, spins))
    except spinop.SpinSystemError as err:
        raise ConfigError(f"[problem]: {err}") from err
    drift = np.asarray(spinop.liouvillian(system))
    ctrls = [np.asarray(spinop.commutation_superoperator(h)) for h in ham]
    closed = None
    if system.r1 == 0 and system.r2 == 0:
        closed = grape.ClosedSystem(spinop.drift_hamiltonian(system), np.array(ham))
    base = grape.ControlProblem(drift, ctrls, rho0, sigma, p.fidelity, closed=closed)
    if cfg.ensemble.trivial:
        return [(1.0, base)]
    lz = _lz_total(system)
    lz_super = np.asarray(spinop.commutation_superoperator(lz))
    members = []
    grid = cfg.ensemble.grid()
    total = sum(w for w, _, _ in grid)
    for w, f, off in grid:
        prob = grape.with_power_scale(base, f) if f != 1.0 else base
        if off != 0.0:
            o = float(hz_to_rad(off))
            prob = grape.with_drift_term(prob, o * lz_super, o * lz)
        members.append((w / total, prob))
    return members


def phase_map(cfg: RunConfig) -> PhaseMap | None:
    p = cfg.problem
    if not p.phase_only:
        return None
    pairs = p.pairs()
    return PhaseMap(np.full((len(pairs), p.slices), p.amplitude), pairs, len(p.controls))


def initial_controls(cfg: RunConfig, seed: int | None = None) -> grape.ControlSet:
    """Seeded start: uniform amplitudes in [-s, s] with s = ``initial_scale``,
    or uniform phases in (-pi, pi] for phase-only problems."""
    p = cfg.problem
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    K, N = len(p.controls), p.slices
    pm = phase_map(cfg)
    if pm is None:
        amps = p.initial_scale * rng.uniform(-1.0, 1.0, (K, N))
    else:
        phases = math.pi - rng.uniform(0.0, TWO_PI, pm.size)
        amps = pm.amplitudes(phases)
    return grape.ControlSet(amps, p.dt, p.power_rad)
