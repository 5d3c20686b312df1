"""Declarative experiments: INI configs, parameter grids, sampling and CSV tables.

Config files use one section per block and carry units in their key names
(``length_um``, ``kappa_mhz``, ``temperature_k``).  Frequencies are entered
as ordinary frequencies and converted to angular units on load.  Scan axes
are written ``linspace a b n``, ``logspace a b n`` or ``values x y z``.
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
import hashlib
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import QubitEnsemble, effective_matrices, equal_strain_positions
from .dicke import DickeConfig, analytic_critical, phase_scan
from .elasticity import DeviceConfig, ModeSpectrum, mode_frequencies
from .liouville import (
    BosonModes,
    build_full_model,
    build_liouvillian_reduced,
    full_model_steady_state,
    steady_state,
)
from .measures import collective_spins, gme_residual, log_negativity, qfi_optimal

MHZ = 2 * math.pi * 1e6


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing

# key -> (DeviceConfig field, factor to SI)
_DEVICE_KEYS = {
    "length_um": ("length", 1e-6),
    "width_nm": ("width", 1e-9),
    "thickness_nm": ("thickness", 1e-9),
    "mass_density_kg_m3": ("mass_density", 1.0),
    "youngs_modulus_gpa": ("youngs_modulus", 1e9),
    "poisson_ratio": ("poisson_ratio", 1.0),
    "quality_factor": ("quality_factor", 1.0),
    "deformation_susceptibility_phz": ("deformation_susceptibility", 1e15),
    "temperature_k": ("temperature", 1.0),
    "built_in_tension_n_m": ("built_in_tension", 1.0),
}
_DEVICE_TEXT = {"boundary_model", "susceptibility_unit"}
_SPECTRUM_KEYS = {"n_max": int, "grid_points": int, "frequency_model": str}

# scan variables outside [device]: name -> unit factor
_QUBIT_SCALARS = {"detuning_mhz": MHZ, "rabi_mhz": MHZ, "kappa_mhz": MHZ}

MEASURES = ("en", "gme", "qfi", "g12", "gamma12", "sz")


def _axis(text: str, where: str) -> np.ndarray:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ConfigError(f"{where}: empty axis")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind in ("linspace", "logspace"):
            if len(args) != 3:
                raise ConfigError(f"{where}: {kind} needs start stop count")
            a, b, n = float(args[0]), float(args[1]), int(args[2])
            if n < 1:
                raise ConfigError(f"{where}: count must be positive")
            return np.linspace(a, b, n) if kind == "linspace" else np.geomspace(a, b, n)
        if kind == "values":
            return np.array([float(x) for x in args])
        return np.array([float(x) for x in parts])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: cannot parse {text!r}") from exc


def _float(section, key, where, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"{where}: missing key {key!r}")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"{where}: {key} = {section[key]!r} is not a number") from exc


@dataclass(frozen=True)
class QubitSpec:
    mode: str = "explicit"  # explicit | optimize | equal-strain
    positions_l: tuple = (1 / 3, 2 / 3)
    count: int = 2
    district_margin: float = 0.1
    objective: str = "maxmin"
    detuning: float = 0.0
    rabi: float = 2 * MHZ
    kappa: float = 10 * MHZ
    decay_convention: str = "half"


@dataclass(frozen=True)
class SamplingSpec:
    enabled: bool = False
    position_error_l: float = 0.1
    count: int = 100
    seed: int | None = None


@dataclass(frozen=True)
class DickeSpec:
    n_qubits: tuple = (2,)
    lambda_over_omega: np.ndarray = field(default_factory=lambda: np.linspace(0.02, 6.0, 150))
    rabi_over_omega: np.ndarray = field(default_factory=lambda: np.array([5.0]))
    kappa: float = 20 * MHZ
    temperature: float = 0.01
    omega: tuple | None = None  # one selected-mode frequency per entry of n_qubits
    g_over_omega: float | None = None
    gamma_over_omega: float | None = None
    gamma_offdiag_over_omega: float | None = None
    threshold: float = 1e-2
    warm_start: bool = True
    decay_convention: str = "half"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    device: DeviceConfig
    n_max: int = 75
    grid_points: int = 2048
    frequency_model: str = "profile_integral"
    qubits: QubitSpec = QubitSpec()
    scan: tuple = ()  # ((variable, axis), ...)
    measures: tuple = ("en",)
    sampling: SamplingSpec = SamplingSpec()
    dicke: DickeSpec | None = None
    graph_sizes: tuple = (2, 3, 4)
    validate_modes: tuple = (1, 2)
    text: str = ""

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


def bundled_configs() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("strainqubits").joinpath("configs").iterdir() if p.name.endswith(".ini"))


def _read_text(source) -> tuple[str, str]:
    path = Path(source)
    if path.exists():
        return path.read_text(), path.stem
    name = str(source)
    res = resources.files("strainqubits").joinpath("configs", f"{name}.ini")
    if res.is_file():
        return res.read_text(), name
    raise ConfigError(f"config {source!r} is neither a file nor a bundled config ({', '.join(bundled_configs())})")


def apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        section, option = key.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][option] = value.strip()


def load_config(source, overrides=()) -> ExperimentConfig:
    text, name = _read_text(source)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    apply_overrides(parser, overrides)
    canon = io.StringIO()
    parser.write(canon)
    try:
        return _build(parser, name, canon.getvalue())
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _device(parser) -> tuple[DeviceConfig, dict]:
    sec = parser["device"] if parser.has_section("device") else {}
    kwargs, extra = {}, {}
    for key, value in sec.items():
        if key in _DEVICE_KEYS:
            fname, factor = _DEVICE_KEYS[key]
            kwargs[fname] = _float(sec, key, "[device]") * factor
        elif key in _DEVICE_TEXT:
            kwargs[key] = value.strip()
        elif key in _SPECTRUM_KEYS:
            try:
                extra[key] = _SPECTRUM_KEYS[key](value.strip())
            except ValueError as exc:
                raise ConfigError(f"[device]: {key} = {value!r}") from exc
        else:
            raise ConfigError(f"[device]: unknown key {key!r}")
    try:
        return DeviceConfig(**kwargs), extra
    except ValueError as exc:
        raise ConfigError(f"[device]: {exc}") from exc


def _qubits(parser) -> QubitSpec:
    if not parser.has_section("qubits"):
        return QubitSpec()
    sec = parser["qubits"]
    known = {"positions", "positions_l", "count", "district_margin", "objective", "decay_convention", *_QUBIT_SCALARS}
    for key in sec:
        if key not in known:
            raise ConfigError(f"[qubits]: unknown key {key!r}")
    mode = sec.get("positions", "explicit").strip()
    if mode not in ("explicit", "optimize", "equal-strain"):
        raise ConfigError(f"[qubits]: positions must be explicit, optimize or equal-strain, got {mode!r}")
    pos = tuple(_axis(sec["positions_l"], "[qubits] positions_l")) if "positions_l" in sec else QubitSpec.positions_l
    count = int(sec.get("count", len(pos) if mode == "explicit" else 2))
    spec = QubitSpec(
        mode=mode,
        positions_l=pos,
        count=count,
        district_margin=_float(sec, "district_margin", "[qubits]", 0.1),
        objective=sec.get("objective", "maxmin").strip(),
        detuning=_float(sec, "detuning_mhz", "[qubits]", 0.0) * MHZ,
        rabi=_float(sec, "rabi_mhz", "[qubits]", 2.0) * MHZ,
        kappa=_float(sec, "kappa_mhz", "[qubits]", 10.0) * MHZ,
        decay_convention=sec.get("decay_convention", "half").strip(),
    )
    if spec.objective not in ("maxmin", "sum"):
        raise ConfigError(f"[qubits]: objective must be maxmin or sum, got {spec.objective!r}")
    if spec.decay_convention not in ("half", "full"):
        raise ConfigError("[qubits]: decay_convention must be half or full")
    if mode == "explicit" and any(not 0 < p < 1 for p in pos):
        raise ConfigError("[qubits]: positions_l must lie strictly inside (0, 1)")
    return spec


def _build(parser, name, text) -> ExperimentConfig:
    device, extra = _device(parser)
    qubits = _qubits(parser)

    scan = []
    if parser.has_section("scan"):
        allowed = set(_DEVICE_KEYS) | set(_QUBIT_SCALARS)
        for key, value in parser["scan"].items():
            if key not in allowed:
                raise ConfigError(f"[scan]: {key!r} is not a scannable parameter")
            scan.append((key, _axis(value, f"[scan] {key}")))

    measures = ("en",)
    if parser.has_section("measures"):
        measures = tuple(m.strip().lower() for m in parser["measures"].get("list", "en").replace(",", " ").split())
        bad = [m for m in measures if m not in MEASURES]
        if bad:
            raise ConfigError(f"[measures]: unknown measure(s) {bad}; choose from {MEASURES}")

    sampling = SamplingSpec()
    if parser.has_section("sampling"):
        sec = parser["sampling"]
        enabled = sec.getboolean("enabled", fallback=False)
        seed = sec.get("seed")
        if enabled and seed is None:
            raise ConfigError("[sampling]: a seed is mandatory when sampling is enabled")
        sampling = SamplingSpec(
            enabled=enabled,
            position_error_l=_float(sec, "position_error_l", "[sampling]", 0.1),
            count=int(sec.get("count", 100)),
            seed=None if seed is None else int(seed),
        )

    dicke = None
    if parser.has_section("dicke"):
        sec = parser["dicke"]
        opt = lambda key: None if key not in sec else float(sec[key])  # noqa: E731
        dicke = DickeSpec(
            n_qubits=tuple(int(x) for x in _axis(sec.get("n_qubits", "2"), "[dicke] n_qubits")),
            lambda_over_omega=_axis(sec.get("lambda_over_omega", "linspace 0.02 6.0 150"), "[dicke] lambda_over_omega"),
            rabi_over_omega=_axis(sec.get("rabi_over_omega", "5"), "[dicke] rabi_over_omega"),
            kappa=_float(sec, "kappa_mhz", "[dicke]", 20.0) * MHZ,
            temperature=_float(sec, "temperature_k", "[dicke]", 0.01),
            omega=None if "omega_mhz" not in sec else tuple(_axis(sec["omega_mhz"], "[dicke] omega_mhz") * MHZ),
            g_over_omega=opt("g_over_omega"),
            gamma_over_omega=opt("gamma_over_omega"),
            gamma_offdiag_over_omega=opt("gamma_offdiag_over_omega"),
            threshold=_float(sec, "threshold", "[dicke]", 1e-2),
            warm_start=sec.getboolean("warm_start", fallback=True),
            decay_convention=sec.get("decay_convention", "half").strip(),
        )
        if dicke.omega is not None and len(dicke.omega) != len(dicke.n_qubits):
            raise ConfigError("[dicke]: omega_mhz needs one value per entry of n_qubits")
        if any(n < 1 for n in dicke.n_qubits):
            raise ConfigError("[dicke]: n_qubits must be positive")

    graph_sizes = (2, 3, 4)
    validate_modes = (1, 2)
    if parser.has_section("graph"):
        graph_sizes = tuple(int(x) for x in _axis(parser["graph"].get("sizes", "2 3 4"), "[graph] sizes"))
        if any(n < 2 or n > 7 for n in graph_sizes):
            raise ConfigError("[graph]: sizes must lie in 2..7")
    if parser.has_section("validate"):
        validate_modes = tuple(int(x) for x in _axis(parser["validate"].get("modes", "1 2"), "[validate] modes"))

    if parser.has_section("output"):
        name = parser["output"].get("name", name).strip()

    return ExperimentConfig(
        name=name,
        device=device,
        n_max=extra.get("n_max", 75),
        grid_points=extra.get("grid_points", 2048),
        frequency_model=extra.get("frequency_model", "profile_integral"),
        qubits=qubits,
        scan=tuple(scan),
        measures=measures,
        sampling=sampling,
        dicke=dicke,
        graph_sizes=graph_sizes,
        validate_modes=validate_modes,
        text=text,
    )


# --------------------------------------------------------------------------
# result tables


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path, timestamp: bool = True) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            for key, value in self.metadata.items():
                fh.write(f"# {key}: {value}\r\n")
            if timestamp:
                fh.write(f"# timestamp: {_dt.datetime.now(_dt.timezone.utc).isoformat()}\r\n")
            fh.write(self.body())
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _meta(config: ExperimentConfig, **extra) -> dict:
    meta = {"config": config.name, "config_hash": config.hash, "code_version": __version__}
    if config.sampling.enabled:
        meta["seed"] = config.sampling.seed
    meta.update(extra)
    return meta


# --------------------------------------------------------------------------
# building blocks


@lru_cache(maxsize=16)
def _spectrum(device: DeviceConfig, n_max: int, grid_points: int, frequency_model: str) -> ModeSpectrum:
    return mode_frequencies(device, n_max, grid_points, frequency_model)


def spectrum_for(config: ExperimentConfig, device: DeviceConfig | None = None) -> ModeSpectrum:
    return _spectrum(device or config.device, config.n_max, config.grid_points, config.frequency_model)


def districts(n: int, margin: float) -> list[tuple[float, float]]:
    """Allowed windows (fractions of L): ((k-1+margin)/n, (k-margin)/n) for k = 1..n."""
    if not 0 < margin < 0.5:
        raise ConfigError(f"district margin {margin} leaves an empty district (need 0 < margin < 0.5)")
    return [((k - 1 + margin) / n, (k - margin) / n) for k in range(1, n + 1)]


def _objective_matrix(spectrum: ModeSpectrum, s: np.ndarray) -> np.ndarray:
    """G between every pair of candidate positions ``s`` (fractions of L)."""
    ens = QubitEnsemble(s * spectrum.device.length, 0.0, 0.0, 1.0)
    return effective_matrices(ens, spectrum, tail_tolerance=1.0).G


def position_objective(G: np.ndarray, kind: str = "maxmin") -> float:
    iu = np.triu_indices(G.shape[0], 1)
    return float(G[iu].min() if kind == "maxmin" else np.abs(G[iu]).sum())


def optimize_positions(
    n: int,
    spectrum: ModeSpectrum,
    margin: float = 0.1,
    objective: str = "maxmin",
    points: int = 41,
    exhaustive_limit: int = 4,
) -> np.ndarray:
    """District-constrained positions (m) maximizing the coherent coupling objective.

    A grid of ``points`` candidates per district is searched exhaustively for
    ``n <= exhaustive_limit`` (coordinate ascent otherwise), then refined by
    continuous coordinate ascent.  Ties go to the configuration closest to
    mirror symmetry about the ribbon centre.
    """
    if n < 2:
        raise ConfigError("position optimization needs at least two qubits")
    boxes = districts(n, margin)
    grids = [np.linspace(lo, hi, points) for lo, hi in boxes]
    flat = np.concatenate(grids)
    Gall = _objective_matrix(spectrum, flat)
    blocks = {(a, b): Gall[a * points:(a + 1) * points, b * points:(b + 1) * points] for a in range(n) for b in range(n)}

    def score(idx):
        G = np.array([[blocks[a, b][idx[a], idx[b]] for b in range(n)] for a in range(n)])
        return position_objective(G, objective)

    def exhaustive(sub):
        # best grid configuration over the candidate indices ``sub`` of every district
        m = len(sub)
        vals = None
        for a, b in itertools.combinations(range(n), 2):
            term = blocks[a, b][np.ix_(sub, sub)].reshape([m if k in (a, b) else 1 for k in range(n)])
            term = np.broadcast_to(term, (m,) * n)
            if objective == "maxmin":
                vals = term.copy() if vals is None else np.minimum(vals, term)
            else:
                vals = np.abs(term).copy() if vals is None else vals + np.abs(term)
        best = vals.max()
        ties = np.argwhere(vals >= best - 1e-12 * abs(best))
        ties = [[sub[i] for i in t] for t in ties]
        asym = [np.abs(flat_pos(t, grids) + flat_pos(t, grids)[::-1] - 1).sum() for t in ties]
        return list(ties[int(np.argmin(asym))])

    if n <= exhaustive_limit:
        idx = exhaustive(list(range(points)))
    else:
        # coarse exhaustive search seeds a coordinate ascent on the full grid
        coarse = max(3, min(points, int(2e6 ** (1 / n))))
        idx = exhaustive(sorted(set(np.linspace(0, points - 1, coarse).round().astype(int).tolist())))
        improved = True
        while improved:
            improved = False
            for k in range(n):
                cur = score(idx)
                trial = []
                for j in range(points):
                    cand = list(idx)
                    cand[k] = j
                    trial.append(score(cand))
                j = int(np.argmax(trial))
                if trial[j] > cur * (1 + 1e-12) + 1e-300:
                    idx[k], improved = j, True
    s = flat_pos(idx, grids)
    return _refine(s, boxes, spectrum, objective) * spectrum.device.length


def flat_pos(idx, grids) -> np.ndarray:
    return np.array([grids[k][i] for k, i in enumerate(idx)])


def _refine(s, boxes, spectrum, objective, sweeps: int = 4) -> np.ndarray:
    from scipy.optimize import minimize_scalar

    s = np.array(s, dtype=float)

    def value(x):
        return position_objective(_objective_matrix(spectrum, x), objective)

    best = value(s)
    for _ in range(sweeps):
        changed = False
        for k, (lo, hi) in enumerate(boxes):
            width = (hi - lo) / 40

            def f(t, k=k):
                x = s.copy()
                x[k] = t
                return -value(x)

            res = minimize_scalar(f, bounds=(max(lo, s[k] - width), min(hi, s[k] + width)), method="bounded",
                                  options={"xatol": 1e-9})
            if -res.fun > best * (1 + 1e-12):
                s[k], best, changed = res.x, -res.fun, True
        if not changed:
            break
    return s


def mispositioning_sampler(base, dx: float, count: int, seed: int, length: float) -> np.ndarray:
    """``count`` draws of uniformly jittered positions, shape (count, N), clipped inside (0, L)."""
    base = np.asarray(base, dtype=float)
    rng = np.random.default_rng(seed)
    if dx == 0:
        return np.tile(base, (count, 1))
    draws = base + rng.uniform(-dx, dx, size=(count, base.size))
    eps = length * 1e-9
    return np.clip(draws, eps, length - eps)


def resolve_positions(config: ExperimentConfig, spectrum: ModeSpectrum) -> np.ndarray:
    q = config.qubits
    L = spectrum.device.length
    if q.mode == "explicit":
        return np.asarray(q.positions_l) * L
    if q.mode == "equal-strain":
        return equal_strain_positions(spectrum, q.count)
    return optimize_positions(q.count, spectrum, q.district_margin, q.objective)


# --------------------------------------------------------------------------
# two-qubit / graph scans


def _point_params(config: ExperimentConfig, point: dict):
    dev_changes, q = {}, config.qubits
    qvals = {"detuning_mhz": q.detuning, "rabi_mhz": q.rabi, "kappa_mhz": q.kappa}
    for key, value in point.items():
        if key in _QUBIT_SCALARS:
            qvals[key] = value * _QUBIT_SCALARS[key]
        else:
            fname, factor = _DEVICE_KEYS[key]
            dev_changes[fname] = value * factor
    device = replace(config.device, **dev_changes) if dev_changes else config.device
    return device, qvals


def _evaluate(config: ExperimentConfig, device, qvals, positions, measures) -> dict:
    """Steady-state measures for one parameter point."""
    spectrum = spectrum_for(config, device)
    ens = QubitEnsemble(positions, qvals["detuning_mhz"], qvals["rabi_mhz"], qvals["kappa_mhz"])
    cm = effective_matrices(ens, spectrum, device.temperature)
    out = {}
    if "g12" in measures:
        out["g12_mhz"] = cm.G[0, 1] / MHZ
    if "gamma12" in measures:
        out["gamma12_mhz"] = cm.Gamma[0, 1] / MHZ
    needs_state = {"en", "gme", "qfi", "sz"} & set(measures)
    if needs_state:
        L = build_liouvillian_reduced(ens, cm, config.qubits.decay_convention)
        rho = steady_state(L)
        n = ens.n
        if "en" in measures:
            out["en"] = log_negativity(rho, range(n // 2))
        if "sz" in measures:
            jz = collective_spins(n)[2]
            out["sz_mean"] = 2 * rho.expect(jz).real / n
        if "gme" in measures:
            g = gme_residual(rho)
            out["gme"] = g.value
            out["gme_low_confidence"] = g.low_confidence
        if "qfi" in measures:
            qr = qfi_optimal(rho)
            out["qfi_mean"] = qr.mean
            out["qfi_jz_mean"] = qr.axes["Jz"] / n
    out["tail_g"] = cm.truncation_tail["G"]
    return out


def _grid(config: ExperimentConfig):
    names = [k for k, _ in config.scan]
    axes = [a for _, a in config.scan]
    return names, list(itertools.product(*axes)) if axes else [()]


def run_scan(config: ExperimentConfig, threads: int = 1, seed: int | None = None) -> ResultTable:
    """Grid run over the ``[scan]`` block; rows follow grid order."""
    names, points = _grid(config)
    spectrum = spectrum_for(config)
    base = resolve_positions(config, spectrum)
    samp = config.sampling
    if samp.enabled:
        seed = samp.seed if seed is None else seed
        n = base.size
        half = 0.5 * (1 - 2 * config.qubits.district_margin) / n
        if samp.position_error_l >= half:
            raise ConfigError(
                f"[sampling]: position error {samp.position_error_l} exceeds the district half-width {half:.3f}"
            )
        samples = mispositioning_sampler(base, samp.position_error_l * spectrum.device.length, samp.count, seed,
                                         spectrum.device.length)
    measures = config.measures

    def task(point):
        device, qvals = _point_params(config, dict(zip(names, point)))
        res = _evaluate(config, device, qvals, base, measures)
        if samp.enabled and "en" in measures:
            vals = np.array([_evaluate(config, device, qvals, z, ("en",))["en"] for z in samples])
            res.update(en_sample_min=vals.min(), en_sample_mean=vals.mean(), en_sample_max=vals.max())
        return res

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(task, points))
    keys = list(results[0])
    table = ResultTable(list(names) + keys, metadata=_meta(
        config, positions_l=" ".join(f"{z / spectrum.device.length:.17g}" for z in base)))
    for point, res in zip(points, results):
        table.rows.append(list(point) + [res[k] for k in keys])
    return table


def run_graph(config: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Optimized positions, GME and QFI as a function of register size."""
    spectrum = spectrum_for(config)
    q = config.qubits
    L = spectrum.device.length

    def task(n):
        z = optimize_positions(n, spectrum, q.district_margin, q.objective)
        ens = QubitEnsemble(z, q.detuning, q.rabi, q.kappa)
        cm = effective_matrices(ens, spectrum)
        rho = steady_state(build_liouvillian_reduced(ens, cm, q.decay_convention))
        g = gme_residual(rho)
        qr = qfi_optimal(rho)
        iu = np.triu_indices(n, 1)
        return [n, " ".join(f"{x / L:.6f}" for x in z), cm.G[iu].min() / MHZ, g.value, int(g.low_confidence),
                qr.mean, qr.axes["Jz"] / n, *qr.direction]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(task, config.graph_sizes))
    cols = ["n_qubits", "positions_l", "min_g_mhz", "gme", "gme_low_confidence", "qfi_mean", "qfi_jz_mean",
            "nx", "ny", "nz"]
    return ResultTable(cols, rows, _meta(config))


# --------------------------------------------------------------------------
# Dicke sweeps


def dicke_config_for(config: ExperimentConfig, index: int, rabi_over_omega: float) -> DickeConfig:
    """Mean-field setup for the ``index``-th register size of the ``[dicke]`` block."""
    d = config.dicke
    n = d.n_qubits[index]
    spectrum = spectrum_for(config)
    cfg = DickeConfig.from_spectrum(spectrum, n, detuning=0.0, kappa=d.kappa, temperature=d.temperature,
                                    decay_convention=d.decay_convention)
    omega = cfg.omega if d.omega is None else d.omega[index]
    gamma = omega / config.device.quality_factor
    G, Gamma = cfg.G.copy(), cfg.Gamma.copy()
    off = ~np.eye(n, dtype=bool)
    if d.g_over_omega is not None:
        G[off] = d.g_over_omega * omega
    if d.gamma_over_omega is not None:
        Gamma[:] = d.gamma_over_omega * omega
    if d.gamma_offdiag_over_omega is not None:
        Gamma[off] = d.gamma_offdiag_over_omega * omega
    ens = cfg.ensemble.with_(rabi=rabi_over_omega * omega)
    return cfg.with_(ensemble=ens, omega=omega, gamma=gamma, G=G, Gamma=Gamma)


def run_dicke(config: ExperimentConfig, threads: int = 1) -> tuple[ResultTable, ResultTable]:
    d = config.dicke
    if d is None:
        raise ConfigError("the config has no [dicke] block")
    sweep = ResultTable(["n_qubits", "lambda_over_omega", "rabi_over_omega", "order_parameter", "iterations",
                         "converged"], metadata=_meta(config))
    crit = ResultTable(["n_qubits", "rabi_over_omega", "lambda_c_numeric_over_omega", "lambda_c_over_omega",
                        "lambda_c0_over_omega"], metadata=_meta(config))
    for index, n in enumerate(d.n_qubits):
        cfg = dicke_config_for(config, index, float(d.rabi_over_omega[0]))
        rabis = [r * cfg.omega for r in d.rabi_over_omega]
        scan = phase_scan(cfg, d.lambda_over_omega * cfg.omega, rabis, d.threshold, d.warm_start, threads=threads)
        for lam, rabi, order, its, ok in scan.rows:
            sweep.rows.append([n, lam / cfg.omega, rabi / cfg.omega, order, its, ok])
        off = cfg.G[0, 1] if n > 1 else 0.0
        for rabi in rabis:
            ac = analytic_critical(cfg.omega, cfg.gamma, n, rabi, d.kappa, off, cfg.Gamma[0, 0])
            lc = scan.critical[rabi]
            crit.rows.append([n, rabi / cfg.omega, math.nan if lc is None else lc / cfg.omega,
                              ac.lambda_c / cfg.omega, ac.lambda_c0 / cfg.omega])
    return sweep, crit


# --------------------------------------------------------------------------
# reduced vs explicit-boson oracle


@dataclass
class ValidationCase:
    modes: int
    en_reduced: float
    en_full: float
    population_error: float
    cutoff: int

    @property
    def passed(self) -> bool:
        return abs(self.en_reduced - self.en_full) < 0.01 and self.population_error < 1e-3


def validation_case(n_modes: int, coupling_ratio: float = 0.05, cutoff: int = 4) -> ValidationCase:
    """Two driven qubits against ``n_modes`` explicit damped bosons.

    Units are dimensionless with the first mode at omega = 1.  Drive and decay
    are set relative to the induced coupling G_12, near the entanglement
    optimum of the reduced model.
    """
    omega = np.array([1.0, 1.7])[:n_modes]
    gamma = 0.2 * omega
    nbar = np.array([0.005, 0.002])[:n_modes]
    lam = coupling_ratio * omega * np.array([[1.0, 0.8], [1.0, 0.6]])[:, :n_modes]
    modes = BosonModes(omega, gamma, nbar, lam)
    G, Gamma = modes.effective()
    g = G[0, 1]
    ens = QubitEnsemble([0.3, 0.6], -0.5 * g, 0.5 * g, g)
    rho_red = steady_state(build_liouvillian_reduced(ens, (G, Gamma)))
    full = full_model_steady_state(build_full_model(ens, modes, cutoff), 2)
    pops = []
    for k in range(2):
        a = rho_red.ptrace([k]).data[0, 0].real
        b = full.qubits.ptrace([k]).data[0, 0].real
        pops.append(abs(a - b))
    return ValidationCase(n_modes, log_negativity(rho_red), log_negativity(full.qubits), max(pops), cutoff)


def run_validate(config: ExperimentConfig, threads: int = 1) -> ResultTable:
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        cases = list(pool.map(validation_case, config.validate_modes))
    cols = ["retained_modes", "fock_cutoff", "en_reduced", "en_full", "en_difference", "population_error", "passed"]
    rows = [[c.modes, c.cutoff, c.en_reduced, c.en_full, abs(c.en_reduced - c.en_full), c.population_error, c.passed]
            for c in cases]
    return ResultTable(cols, rows, _meta(config))


def run(config: ExperimentConfig, out_dir, threads: int = 1, seed: int | None = None) -> list[Path]:
    """Run everything the config asks for and write one CSV per output."""
    out = Path(out_dir)
    written = [run_scan(config, threads, seed).write(out / f"{config.name}.csv")]
    if config.dicke is not None:
        sweep, crit = run_dicke(config, threads)
        written += [sweep.write(out / f"{config.name}_dicke.csv"), crit.write(out / f"{config.name}_critical.csv")]
    return written


def read_table(path) -> tuple[dict, dict]:
    """Load a CSV written by :class:`ResultTable`: (metadata, columns as arrays)."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return meta, cols
