"""Experiment configs, figure presets and deterministic CSV output.

A run is a list of :class:`Curve` objects; each curve becomes one CSV with
header ``layer,beta,gamma,energy,e_p[,p0..p7][,n_meas_cum]``.  Floats are
written with ``repr`` so files are bit-stable on one platform.  Every run
directory also gets a ``manifest.csv`` mapping preset, figure, parameters and
file name.

Config files are TOML::

    schema = "cdfqa-config/1"
    output = "alpha_sweep"        # relative to the output root
    seed = 0
    shots = 10000                 # optional, finite-shot feedback
    bins = true                   # optional p0..p{bin_count-1} columns
    bin_count = 8

    [chain]
    n_sites = 6
    field_hz = 0.4
    field_hx = 0.4
    boundary = "periodic"

    [protocol]
    h1 = "X"
    h_cd = "Y"
    alpha = 6.0
    delta_t = 0.01
    n_layers = 200
    h_add = false
    evolution = "exact"

    [sweep]
    axis = "alpha"                # alpha | n_sites | delta_t | pool
    values = [1, 2, 4, 6]

    [noise]
    per_layer_error = 0.008
    folds = [1, 3]
    extrapolate = true

Instead of ``[chain]``/``[protocol]`` a config may name a ``preset``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import re
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .measure import run_protocol_sampled
from .model import SpinChainSpec
from .noisy import SHERBROOKE_ERROR, TORINO_ERROR, NoiseSpec, run_noisy, run_zne
from .protocol import LayerRecord, ProtocolError, ProtocolSpec, run_protocol

log = logging.getLogger(__name__)

SCHEMA = "cdfqa-config/1"
OUTPUT_ENV = "CDFQA_OUTPUT"
DEFAULT_OUTPUT = "cdfqa_out"
POOL = ("I", "Y", "YZ", "YX")
SWEEP_AXES = ("alpha", "n_sites", "delta_t", "pool")
TAU = 0.01


class ConfigError(ValueError):
    """Malformed or schema-invalid configuration (exit code 2)."""


class PhysicsError(ValueError):
    """Valid config describing an invalid physical setup (exit code 3)."""


@dataclass(frozen=True)
class Curve:
    name: str
    spec: ProtocolSpec
    bin_count: int | None = None
    shots: int | None = None
    seed: int = 0
    noise: NoiseSpec | None = None
    zne: bool = False
    meas_scale: int | None = None

    def run(self) -> list[LayerRecord]:
        with warnings.catch_warnings():
            # large alpha*dt is deliberate in some sweeps
            warnings.simplefilter("ignore", RuntimeWarning)
            if self.noise is not None:
                if self.zne:
                    return run_zne(self.spec, self.noise)[0]
                return run_noisy(self.spec, self.noise, self.shots, self.seed)
            if self.shots:
                return run_protocol_sampled(self.spec, self.shots, self.seed, self.bin_count)
            return run_protocol(self.spec, self.bin_count)

    def parameters(self) -> str:
        s, c = self.spec, self.spec.chain
        parts = [
            f"N={c.n_sites}", f"J={c.coupling_j!r}", f"hz={c.field_hz!r}", f"hx={c.field_hx!r}",
            f"bc={c.boundary}", f"H1={s.h1_tag}", f"HCD={s.h_cd_tag}", f"alpha={s.alpha!r}",
            f"dt={s.delta_t!r}", f"L={s.n_layers}", f"mode={s.evolution_mode}",
        ]
        if s.h_add_enabled:
            parts.append("h_add=on")
        if self.shots:
            parts.append(f"shots={self.shots};seed={self.seed}")
        if self.noise is not None:
            parts.append(f"p={self.noise.per_layer_error!r}")
            if self.zne:
                parts.append("folds=" + "/".join(map(str, self.noise.fold_factors)))
        return ";".join(parts)


@dataclass(frozen=True)
class Preset:
    name: str
    figure: str
    title: str
    build: Callable[[], list[Curve]]
    notes: str = ""
    log_scale: bool = False


def to_csv(records: Sequence[LayerRecord], bin_count: int | None = None, meas_scale: int | None = None) -> str:
    header = ["layer", "beta", "gamma", "energy", "e_p"]
    if bin_count:
        header += [f"p{i}" for i in range(bin_count)]
    if meas_scale:
        header.append("n_meas_cum")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        row = [str(r.layer), repr(float(r.beta)), repr(float(r.gamma)), repr(float(r.energy)), repr(float(r.e_p))]
        if bin_count:
            row += [repr(float(v)) for v in r.bin_weights]
        if meas_scale:
            row.append(str(r.layer * meas_scale))
        w.writerow(row)
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=+-]", "", name.replace("*", "x"))


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def run_curves(
    curves: Sequence[Curve],
    out_dir: Path,
    preset: str = "",
    figure: str = "",
    workers: int | None = None,
) -> list[Path]:
    """Run curves concurrently and write one CSV each plus ``manifest.csv``."""
    names = [c.name for c in curves]
    if len(set(map(slug, names))) != len(names):
        raise ConfigError("curve names collide after file-name normalisation")
    with ThreadPoolExecutor(max_workers=workers or min(8, len(curves) or 1)) as pool:
        results = list(pool.map(lambda c: c.run(), curves))
    paths = []
    manifest = io.StringIO()
    mw = csv.writer(manifest, lineterminator="\n")
    mw.writerow(["preset", "figure", "curve", "parameters", "file"])
    for c, recs in zip(curves, results):
        path = out_dir / f"{slug(c.name)}.csv"
        write_atomic(path, to_csv(recs, c.bin_count, c.meas_scale))
        mw.writerow([preset, figure, c.name, c.parameters(), path.name])
        paths.append(path)
    write_atomic(out_dir / "manifest.csv", manifest.getvalue())
    return paths


# presets ---------------------------------------------------------------

LFI6 = SpinChainSpec(6, field_hz=0.4)
MFI6 = SpinChainSpec(6, field_hz=0.4, field_hx=0.4)
# hardware-sized chain: four open-boundary spins
MFI4_OPEN = SpinChainSpec(4, field_hz=0.4, field_hx=0.4, boundary="open")
HW_ALPHA = 4.0
HW_LAYERS = 10
# cumulative-measurement scale factors of the measurement-cost figure
MEAS_SCALE = {"I": 2, "Y": 4, "YZ": 4, "YX": 8}


def _pool(chain: SpinChainSpec, prefix: str = "", **kw) -> list[Curve]:
    extra = {k: kw.pop(k) for k in ("bin_count", "meas_scale") if k in kw}
    out = []
    for tag in POOL:
        opts = dict(extra)
        if opts.get("meas_scale"):
            opts["meas_scale"] = MEAS_SCALE[tag]
        out.append(Curve(prefix + tag, ProtocolSpec(chain, h_cd_tag=tag, **kw), **opts))
    return out


def _tfi(hx: float, n: int = 6) -> SpinChainSpec:
    return SpinChainSpec(n, field_hx=hx)


def _fig5() -> list[Curve]:
    return [c for a in (1.0, 2.0, 4.0, 6.0) for c in _pool(MFI6, f"alpha={a:g}_", alpha=a)]


def _fig6() -> list[Curve]:
    return [
        c
        for n in range(4, 11)
        for c in _pool(SpinChainSpec(n, field_hz=0.4, field_hx=0.4), f"N={n}_", alpha=4.0)
    ]


def _fig7() -> list[Curve]:
    return [c for f in (0.5, 1.0, 2.0, 4.0) for c in _pool(MFI6, f"dt={f:g}tau_", delta_t=f * TAU)]


def _fig8() -> list[Curve]:
    return _pool(_tfi(0.4), "hx=0.4_") + _pool(_tfi(0.0), "hx=0_")


def _fig9() -> list[Curve]:
    chain = _tfi(0.4)
    return [Curve(t, ProtocolSpec(chain, h_cd_tag=t)) for t in ("I", "YZ", "Y+0.5*YZ", "YX+0.5*YZ")]


def _fig10() -> list[Curve]:
    chain = _tfi(0.0)
    return [
        Curve("I", ProtocolSpec(chain)),
        Curve("YZ", ProtocolSpec(chain, h_cd_tag="YZ")),
        Curve("Y_h_add", ProtocolSpec(chain, h_cd_tag="Y", h_add_enabled=True)),
    ]


def _hw(tag: str) -> ProtocolSpec:
    return ProtocolSpec(MFI4_OPEN, h_cd_tag=tag, alpha=HW_ALPHA, delta_t=0.02, n_layers=HW_LAYERS)


def _fig12() -> list[Curve]:
    out = []
    for tag in POOL:
        out.append(Curve(f"{tag}_exact", _hw(tag)))
        out.append(Curve(f"{tag}_noisy", _hw(tag), noise=NoiseSpec(TORINO_ERROR)))
    return out


def _fig13() -> list[Curve]:
    spec = _hw("Y")
    out = [Curve("C", spec)]
    for label, p in (("T", TORINO_ERROR), ("S", SHERBROOKE_ERROR)):
        out.append(Curve(label, spec, noise=NoiseSpec(p)))
        out.append(Curve(f"{label}-ZNE", spec, noise=NoiseSpec(p, (1, 3)), zne=True))
    return out


def _h1z(values: Sequence[float]) -> Callable[[], list[Curve]]:
    def build():
        return [c for hx in values for c in _pool(_tfi(hx), f"hx={hx:g}_", h1_tag="Z")]

    return build


def _fig17() -> list[Curve]:
    spec = ProtocolSpec(MFI6, h_cd_tag="Y")
    return [Curve("C", spec)] + [Curve(f"M={m}", spec, shots=m, seed=0) for m in (100, 1000, 10000)]


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset("fig2", "2", "LFI N=6, four protocols", lambda: _pool(LFI6)),
        Preset("fig3", "3", "LFI N=6 keyed by cumulative parallel measurements", lambda: _pool(LFI6, meas_scale=True),
               notes="scale factors I:2 Y:4 YZ:4 YX:8 per layer"),
        Preset("fig4", "4", "MFI N=6 with energy-bin weights", lambda: _pool(MFI6, bin_count=8)),
        Preset("fig5", "5", "MFI N=6, alpha in {1,2,4,6}", _fig5, log_scale=True),
        Preset("fig6", "6", "MFI alpha=4, N=4..10", _fig6, log_scale=True),
        Preset("fig7", "7", "MFI N=6, delta_t in {0.5,1,2,4}*tau", _fig7, log_scale=True,
               notes="tau=0.01; the delta_t multipliers are a chosen set"),
        Preset("fig8", "8", "TFI h_x=0.4 and h_x=0", _fig8),
        Preset("fig9", "9", "TFI h_x=0.4, combined CD operators", _fig9, notes="L=200 assumed"),
        Preset("fig10", "10", "TFI h_x=0 with decaying Z term", _fig10),
        Preset("fig12", "12", "MFI N=4 open, delta_t=0.02, noiseless vs p=0.008", _fig12,
               notes=f"alpha={HW_ALPHA:g}, L={HW_LAYERS} assumed; global depolarizing noise model"),
        Preset("fig13", "13", "Y protocol at p=0.008 and p=0.017 with and without ZNE", _fig13,
               notes="linear extrapolation over folds 1,3"),
        Preset("fig14", "14", "TFI with H1=Z, h_x in {0.4, 1.4}", _h1z((0.4, 1.4))),
        Preset("fig15", "15", "TFI with H1=Z, h_x in {-0.4, -1.4, 1.4}", _h1z((-0.4, -1.4, 1.4))),
        Preset("fig16", "16", "LFI N=6 with first-order Trotter layers",
               lambda: _pool(LFI6, evolution_mode="trotter1")),
        Preset("fig17", "17", "MFI N=6 Y protocol with M in {1e2,1e3,1e4} shots", _fig17, notes="seed 0"),
    ]
}


def run_preset(name: str, out_dir: Path | None = None) -> list[Path]:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; see list-presets") from None
    out_dir = out_dir or output_root() / name
    return run_curves(preset.build(), out_dir, preset.name, preset.figure)


def gnuplot_script(paths: Sequence[Path], log_scale: bool = False, x_column: int = 1) -> str:
    """A gnuplot script plotting ``e_p`` of every CSV against ``x_column``."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 'layer'", "set ylabel 'e_P'"]
    if log_scale:
        lines.append("set logscale y")
    plots = [f"'{p.name}' using {x_column}:5 with lines title '{p.stem}'" for p in paths]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# configs ---------------------------------------------------------------

_TOP_KEYS = {"schema", "preset", "output", "seed", "shots", "bins", "bin_count", "chain", "protocol", "sweep", "noise"}
_CHAIN_KEYS = {"n_sites", "coupling_j", "field_hz", "field_hx", "boundary"}
_PROTOCOL_KEYS = {"h1", "h_cd", "alpha", "delta_t", "n_layers", "h_add", "evolution"}
_NOISE_KEYS = {"per_layer_error", "folds", "extrapolate"}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str | None = None
    spec: ProtocolSpec | None = None
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    output: str | None = None
    seed: int = 0
    shots: int | None = None
    noise: NoiseSpec | None = None
    extrapolate: bool = False
    bins: bool = False
    bin_count: int = 8
    source: str = field(default="", compare=False)

    def curves(self) -> list[Curve]:
        if self.preset is not None:
            return PRESETS[self.preset].build()
        base = Curve(
            str(self.spec.h_cd_tag),
            self.spec,
            bin_count=self.bin_count if self.bins else None,
            shots=self.shots,
            seed=self.seed,
            noise=self.noise,
        )
        if self.sweep_axis is None:
            variants = [base]
        else:
            variants = [self._sweep_point(base, v) for v in self.sweep_values]
        if self.noise is not None and self.extrapolate:
            variants += [replace(c, name=f"{c.name}-ZNE", zne=True) for c in variants]
        return variants

    def _sweep_point(self, base: Curve, value) -> Curve:
        spec = base.spec
        axis = self.sweep_axis
        try:
            if axis == "pool":
                return replace(base, name=str(value), spec=spec.with_(h_cd_tag=str(value)))
            if axis == "n_sites":
                chain = replace(spec.chain, n_sites=int(value))
                return replace(base, name=f"N={int(value)}", spec=spec.with_(chain=chain))
            new = spec.with_(**{axis: float(value)})
            return replace(base, name=f"{axis}={float(value):g}", spec=new)
        except ValueError as exc:
            raise PhysicsError(f"sweep {axis}={value!r}: {exc}") from exc


def _line_of(text: str, key: str) -> str:
    pat = re.compile(rf"^\s*\[?\s*{re.escape(key)}\s*[=\]]")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return f"line {i}: "
    return ""


def _expect_type(text, key, value, types, what):
    types = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{_line_of(text, key)}{key} must be {what}")
    if not isinstance(value, types):
        raise ConfigError(f"{_line_of(text, key)}{key} must be {what}, got {value!r}")
    return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    num = (int, float)

    def unknown(table: dict, allowed: set, where: str):
        for k in table:
            if k not in allowed:
                raise ConfigError(f"{source}: {_line_of(text, k)}unknown key {k!r} in {where}")

    unknown(data, _TOP_KEYS, "top level")
    schema = data.get("schema")
    if schema != SCHEMA:
        raise ConfigError(f"{source}: {_line_of(text, 'schema')}schema must be {SCHEMA!r}, got {schema!r}")
    preset = data.get("preset")
    explicit = "chain" in data or "protocol" in data
    if (preset is None) == (not explicit):
        raise ConfigError(f"{source}: give exactly one of 'preset' or [chain]/[protocol]")
    kw: dict = {"source": source}
    for key, types, what in (("output", str, "a string"), ("seed", int, "an integer"), ("bins", bool, "a boolean")):
        if key in data:
            kw[key] = _expect_type(text, key, data[key], types, what)
    if "shots" in data:
        shots = _expect_type(text, "shots", data["shots"], int, "an integer")
        if shots < 1:
            raise ConfigError(f"{source}: {_line_of(text, 'shots')}shots must be >= 1")
        kw["shots"] = shots
    if "bin_count" in data:
        bc = _expect_type(text, "bin_count", data["bin_count"], int, "an integer")
        if bc < 1:
            raise ConfigError(f"{source}: {_line_of(text, 'bin_count')}bin_count must be >= 1")
        kw["bin_count"] = bc

    if preset is not None:
        _expect_type(text, "preset", preset, str, "a string")
        if preset not in PRESETS:
            raise ConfigError(f"{source}: {_line_of(text, 'preset')}unknown preset {preset!r}")
        for k in ("sweep", "noise", "shots"):
            if k in data:
                raise ConfigError(f"{source}: {_line_of(text, k)}{k!r} cannot be combined with a preset")
        return ExperimentConfig(preset=preset, **kw)

    chain_t = _expect_type(text, "chain", data.get("chain", {}), dict, "a table")
    proto_t = _expect_type(text, "protocol", data.get("protocol", {}), dict, "a table")
    unknown(chain_t, _CHAIN_KEYS, "[chain]")
    unknown(proto_t, _PROTOCOL_KEYS, "[protocol]")
    if "n_sites" not in chain_t:
        raise ConfigError(f"{source}: [chain] needs n_sites")
    for k in ("coupling_j", "field_hz", "field_hx"):
        if k in chain_t:
            _expect_type(text, k, chain_t[k], num, "a number")
    _expect_type(text, "n_sites", chain_t["n_sites"], int, "an integer")
    for k in ("alpha", "delta_t"):
        if k in proto_t:
            _expect_type(text, k, proto_t[k], num, "a number")
    for k in ("h1", "h_cd", "evolution"):
        if k in proto_t:
            _expect_type(text, k, proto_t[k], str, "a string")
    if "n_layers" in proto_t:
        _expect_type(text, "n_layers", proto_t["n_layers"], int, "an integer")
    if "h_add" in proto_t:
        _expect_type(text, "h_add", proto_t["h_add"], bool, "a boolean")
    try:
        chain = SpinChainSpec(**{k: chain_t[k] for k in chain_t})
        spec = ProtocolSpec(
            chain,
            h1_tag=proto_t.get("h1", "X"),
            h_cd_tag=proto_t.get("h_cd", "I"),
            alpha=float(proto_t.get("alpha", 6.0)),
            delta_t=float(proto_t.get("delta_t", 0.01)),
            n_layers=proto_t.get("n_layers", 200),
            h_add_enabled=proto_t.get("h_add", False),
            evolution_mode=proto_t.get("evolution", "exact"),
        )
    except ValueError as exc:
        raise PhysicsError(f"{source}: {exc}") from exc
    kw["spec"] = spec

    if "sweep" in data:
        sw = _expect_type(text, "sweep", data["sweep"], dict, "a table")
        unknown(sw, {"axis", "values"}, "[sweep]")
        axis = sw.get("axis")
        if axis not in SWEEP_AXES:
            raise ConfigError(f"{source}: {_line_of(text, 'axis')}sweep axis must be one of {SWEEP_AXES}")
        values = sw.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{source}: {_line_of(text, 'values')}sweep values must be a non-empty list")
        kw["sweep_axis"] = axis
        kw["sweep_values"] = tuple(values)

    if "noise" in data:
        nt = _expect_type(text, "noise", data["noise"], dict, "a table")
        unknown(nt, _NOISE_KEYS, "[noise]")
        p = _expect_type(text, "per_layer_error", nt.get("per_layer_error", 0.0), num, "a number")
        folds = nt.get("folds", [1, 3])
        try:
            kw["noise"] = NoiseSpec(float(p), tuple(folds))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: {_line_of(text, 'folds')}{exc}") from exc
        kw["extrapolate"] = _expect_type(text, "extrapolate", nt.get("extrapolate", False), bool, "a boolean")
        if kw["extrapolate"] and len(kw["noise"].fold_factors) < 2:
            raise ConfigError(f"{source}: extrapolation needs at least two folds")
    cfg = ExperimentConfig(**kw)
    # surface invalid sweep points before anything runs
    cfg.curves()
    return cfg


def load_config(path: "str | Path") -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))


def run_config(cfg: ExperimentConfig, out_dir: Path | None = None) -> list[Path]:
    if out_dir is None:
        name = cfg.output or cfg.preset or Path(cfg.source).stem or "run"
        out_dir = output_root() / name
    if cfg.preset is not None:
        return run_preset(cfg.preset, out_dir)
    try:
        return run_curves(cfg.curves(), out_dir, "", "")
    except ProtocolError:
        raise
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise PhysicsError(str(exc)) from exc
