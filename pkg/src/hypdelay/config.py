"""JSON run configuration.

Parsing runs in two passes: pydantic checks structure and types (unknown keys
are rejected), then :func:`_semantic_errors` checks the mathematical
invariants.  Both report errors as ``(path, message)`` with paths such as
``measure.atoms[0].theta``.
"""

from __future__ import annotations

import json
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .measure import Atom, DensityPiece, HistorySegment, StieltjesMeasure
from .simulate import SimConfig
from .transport import GridFunction, PiecewiseConstant, TransportSystem

SCHEMA_VERSION = 1


class ConfigParseError(ValueError):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class Piece(_Strict):
    to: float
    value: float


class ChannelSpec(_Strict):
    v: list[Piece]
    k: list[Piece] = Field(default_factory=list)


class SystemSpec(_Strict):
    n: int
    ell: float
    channels: list[ChannelSpec]


class AtomSpec(_Strict):
    theta: float
    matrix: list[list[float]]


class DensitySpec(_Strict):
    start: float = Field(alias="from")
    stop: float = Field(alias="to")
    matrix: list[list[float]]
    exp_rate: float = 0.0


class MeasureSpec(_Strict):
    delay: float
    atoms: list[AtomSpec] = Field(default_factory=list)
    densities: list[DensitySpec] = Field(default_factory=list)


class SampledHistory(_Strict):
    dt: float
    values: list[list[float]]


class PhiSpec(_Strict):
    constant: Optional[list[float]] = None
    sampled: Optional[SampledHistory] = None


class InitialSpec(_Strict):
    # per channel: a constant, or [[x, value], ...] breakpoints of a piecewise-linear profile
    f: Optional[list[Union[float, list[tuple[float, float]]]]] = None
    phi: Optional[PhiSpec] = None


class SimSpec(_Strict):
    dt: Optional[float] = None
    t_end: float = 40.0
    grid_nodes: int = 257
    p: float = 2.0
    snapshot_times: list[float] = Field(default_factory=list)
    exponent: Literal["relative", "foot"] = "relative"


class SpectralSpec(_Strict):
    rect: Optional[tuple[float, float, float, float]] = None
    tol: float = 1e-9
    imag_cap: Optional[float] = None


class OracleSpec(_Strict):
    cells: int = 2048
    cfl: float = 0.9


class OutputSpec(_Strict):
    dir: str = "."
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(_Strict):
    version: int
    system: SystemSpec
    measure: MeasureSpec
    initial: InitialSpec = Field(default_factory=InitialSpec)
    sim: SimSpec = Field(default_factory=SimSpec)
    spectral: SpectralSpec = Field(default_factory=SpectralSpec)
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    def build_system(self) -> TransportSystem:
        ell = self.system.ell
        speeds, reactions = [], []
        for ch in self.system.channels:
            speeds.append(PiecewiseConstant([p.to for p in ch.v], [p.value for p in ch.v]))
            k = ch.k or [Piece(to=ell, value=0.0)]
            reactions.append(PiecewiseConstant([p.to for p in k], [p.value for p in k]))
        return TransportSystem(ell, speeds, reactions)

    def build_measure(self) -> StieltjesMeasure:
        ms = self.measure
        return StieltjesMeasure(
            ms.delay,
            self.system.n,
            tuple(Atom(a.theta, np.array(a.matrix, dtype=float)) for a in ms.atoms),
            tuple(DensityPiece(d.start, d.stop, np.array(d.matrix, dtype=float), d.exp_rate) for d in ms.densities),
        )

    @property
    def dt(self) -> float:
        if self.sim.dt is not None:
            return self.sim.dt
        sys = self.build_system()
        return min(self.measure.delay, sys.min_tau) / 32

    def sim_config(self) -> SimConfig:
        return SimConfig(
            dt=self.dt,
            t_end=self.sim.t_end,
            grid_nodes=self.sim.grid_nodes,
            p=self.sim.p,
            snapshot_times=tuple(self.sim.snapshot_times),
        )

    def build_initial_state(self, nodes: int | None = None) -> GridFunction:
        n, ell = self.system.n, self.system.ell
        nodes = nodes or self.sim.grid_nodes
        x = np.linspace(0.0, ell, nodes)
        spec = self.initial.f if self.initial.f is not None else [1.0] * n
        cols = []
        for ch in spec:
            if isinstance(ch, (int, float)):
                cols.append(np.full(nodes, float(ch)))
            else:
                pts = np.array(ch, dtype=float)
                cols.append(np.interp(x, pts[:, 0], pts[:, 1]))
        return GridFunction(ell, np.stack(cols, axis=1))

    def build_initial_history(self) -> HistorySegment:
        n, r = self.system.n, self.measure.delay
        phi = self.initial.phi
        if phi is None or phi.sampled is None:
            value = phi.constant if phi is not None and phi.constant is not None else [1.0] * n
            return HistorySegment.constant(value, r, r / 64)
        return HistorySegment(r, np.array(phi.sampled.values, dtype=float))


def _path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _square(matrix, n) -> bool:
    return len(matrix) == n and all(len(row) == n for row in matrix)


def _pieces_errors(pieces, ell, path, positive) -> list[tuple[str, str]]:
    errs = []
    if not pieces:
        return [(path, "must have at least one piece")]
    prev = 0.0
    for j, p in enumerate(pieces):
        if not p.to > prev:
            errs.append((f"{path}[{j}].to", "breakpoints must be strictly increasing and > 0"))
        prev = p.to
        if positive and not p.value > 0:
            errs.append((f"{path}[{j}].value", "must be > 0"))
    if abs(pieces[-1].to - ell) > 1e-12 * max(1.0, abs(ell)):
        errs.append((f"{path}[{len(pieces) - 1}].to", f"final breakpoint must equal ell={ell}"))
    return errs


def _semantic_errors(cfg: RunConfig) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    if cfg.version != SCHEMA_VERSION:
        errs.append(("version", f"unsupported schema version {cfg.version}, expected {SCHEMA_VERSION}"))
    s = cfg.system
    if s.n < 1:
        errs.append(("system.n", "must be >= 1"))
    if not s.ell > 0:
        errs.append(("system.ell", "must be > 0"))
    if len(s.channels) != s.n:
        errs.append(("system.channels", f"expected {s.n} channels, got {len(s.channels)}"))
    if s.ell > 0:
        for i, ch in enumerate(s.channels):
            errs += _pieces_errors(ch.v, s.ell, f"system.channels[{i}].v", positive=True)
            if ch.k:
                errs += _pieces_errors(ch.k, s.ell, f"system.channels[{i}].k", positive=False)

    m = cfg.measure
    r = m.delay
    if not r > 0:
        errs.append(("measure.delay", "must be > 0"))
    for j, a in enumerate(m.atoms):
        if not -r <= a.theta <= 0:
            errs.append((f"measure.atoms[{j}].theta", "must lie in [-r,0]"))
        if not _square(a.matrix, s.n):
            errs.append((f"measure.atoms[{j}].matrix", f"must be {s.n}x{s.n}"))
    spans = []
    for j, d in enumerate(m.densities):
        if not -r <= d.start < d.stop <= 0:
            errs.append((f"measure.densities[{j}]", "need -r <= from < to <= 0"))
        else:
            spans.append((d.start, d.stop, j))
        if not _square(d.matrix, s.n):
            errs.append((f"measure.densities[{j}].matrix", f"must be {s.n}x{s.n}"))
    spans.sort()
    for (a0, b0, _), (a1, _, j) in zip(spans, spans[1:]):
        if a1 < b0:
            errs.append((f"measure.densities[{j}]", "density intervals overlap"))

    init = cfg.initial
    if init.f is not None:
        if len(init.f) != s.n:
            errs.append(("initial.f", f"expected {s.n} channel profiles"))
        for i, ch in enumerate(init.f):
            if isinstance(ch, list):
                xs = [p[0] for p in ch]
                if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])) or xs[0] > 0 or xs[-1] < s.ell:
                    errs.append((f"initial.f[{i}]", "breakpoints must increase and cover [0, ell]"))
    if init.phi is not None:
        phi = init.phi
        if (phi.constant is None) == (phi.sampled is None):
            errs.append(("initial.phi", "give exactly one of 'constant' or 'sampled'"))
        elif phi.constant is not None and len(phi.constant) != s.n:
            errs.append(("initial.phi.constant", f"expected {s.n} values"))
        elif phi.sampled is not None and r > 0:
            sv = phi.sampled
            if not sv.dt > 0:
                errs.append(("initial.phi.sampled.dt", "must be > 0"))
            elif len(sv.values) != int(round(r / sv.dt)) + 1:
                errs.append(("initial.phi.sampled.values", "sample count must be round(r/dt)+1"))
            if any(len(row) != s.n for row in sv.values):
                errs.append(("initial.phi.sampled.values", f"each sample must have {s.n} entries"))

    sim = cfg.sim
    if sim.dt is not None and not sim.dt > 0:
        errs.append(("sim.dt", "must be > 0"))
    if not sim.t_end > 0:
        errs.append(("sim.t_end", "must be > 0"))
    if sim.grid_nodes < 2:
        errs.append(("sim.grid_nodes", "must be >= 2"))
    if sim.p < 1:
        errs.append(("sim.p", "must be >= 1"))
    sp = cfg.spectral
    if sp.rect is not None and not (sp.rect[0] < sp.rect[1] and sp.rect[2] < sp.rect[3]):
        errs.append(("spectral.rect", "need re_lo < re_hi and im_lo < im_hi"))
    if sp.imag_cap is not None and not sp.imag_cap > 0:
        errs.append(("spectral.imag_cap", "must be > 0"))
    if cfg.oracle.cells < 16:
        errs.append(("oracle.cells", "must be >= 16"))
    if not 0 < cfg.oracle.cfl <= 1:
        errs.append(("oracle.cfl", "must lie in (0, 1]"))
    return errs


def parse_config_dict(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigParseError(
            [(_path(e["loc"]), e["msg"].removeprefix("Value error, ")) for e in exc.errors()]
        ) from None
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigParseError(errs)
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError([("", f"malformed JSON: {exc}")]) from None
    if not isinstance(data, dict):
        raise ConfigParseError([("", "top level must be a JSON object")])
    return parse_config_dict(data)
