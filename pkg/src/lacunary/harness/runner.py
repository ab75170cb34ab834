"""Experiment runner: one row of recorded constants per (family, seed, alpha)."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..cz import PolyBasis, bad_part, moments, projection_constant, whitney
from ..density import CubeSplit, decompose, gamma_ladder, reconstruct, verify_widths
from ..exceptional import (
    ExceptionalConfig, Knobs, exceptional_set, expanded_lattice, height_parameter,
    regime_exceptional,
)
from ..grid import GranularFunction
from ..heights import (
    heavy_tail_support, k2_scales, k3_tail_ratio, l1_intermediate, l2_global_scale_bound,
    l2_light, per_offset_l1, profile_for, support_size_ratio, telescope,
)
from ..io import write_pgm
from ..maximal import ScaleRange, hardy_littlewood, lacunary_maximal, superlevel
from ..spherical import domination_constant, pointwise_bound_ratio
from .families import generate, unit_lattice
from .ratios import extrapolation_ratio, level_split, weak_type_ratio

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

COLUMNS = [
    "row", "family", "label", "seed", "alpha", "n", "delta", "kmin", "kmax",
    "mass", "omega_measure", "n_whitney", "n_floor", "n_pieces", "n_levels",
    "C_pt", "C_dom", "C_proj", "moment_max", "r_min", "r_max", "w_max",
    "C_size", "C_A", "C_L1", "L1_int", "C_L2", "C_2ess2", "K3_tail", "C_supp",
    "telescope_residual", "weak_type", "extrap_eps1", "extrap_eps01",
    "inv_weak11", "inv_whitney", "inv_moments", "inv_reconstruct", "inv_tail_in_A",
    "inv_telescope", "inv_level_split",
    "error", "time_s",
]
INVARIANTS = [c for c in COLUMNS if c.startswith("inv_")]
TIMING = ("time_s",)


@dataclass
class FamilySpec:
    name: str
    label: str | None = None
    params: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        return self.label or self.name


@dataclass
class ExperimentSpec:
    families: list[FamilySpec] = field(default_factory=list)
    grid: int = 512
    alphas: list[float] = field(default_factory=lambda: [2.0 ** -2, 2.0 ** -3, 2.0 ** -4, 2.0 ** -5])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    kmin: int = -6
    kmax: int = -3
    knobs: Knobs = field(default_factory=Knobs.desk)
    out: str = "out"
    dump_exceptional: bool = False
    max_detail_pieces: int = 4

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        fams = [FamilySpec(**f) if isinstance(f, dict) else FamilySpec(f) for f in d.pop("families", [])]
        knobs = d.pop("knobs", None)
        if d.pop("paper_constants", False):
            knobs = Knobs.literal()
        elif isinstance(knobs, dict):
            knobs = Knobs(**{**Knobs.desk().as_dict(), **knobs})
        spec = cls(families=fams, **d)
        if knobs is not None:
            spec.knobs = knobs
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["knobs"] = self.knobs.as_dict()
        return d


def smoke_spec(out: str = "out-smoke") -> ExperimentSpec:
    return ExperimentSpec([FamilySpec("cube", params={"side": 0.25})], grid=64,
                          alphas=[0.25], seeds=[0], kmin=-3, kmax=-3, out=out)


def full_spec(out: str = "out-full") -> ExperimentSpec:
    fams = [
        FamilySpec("cube", params={"side": 0.125}),
        FamilySpec("scattered-cubes", "scattered-coarse", {"count": 8, "side": 1 / 32}),
        FamilySpec("scattered-cubes", "scattered-fine", {"count": 48, "side": 1 / 64}),
        FamilySpec("cantor", params={"depth": 3, "ratio": 0.25}),
        FamilySpec("multilevel", params={"levels": 4, "per_level": 2, "side": 1 / 16}),
    ]
    return ExperimentSpec(fams, grid=512, out=out)


PRESETS = {"smoke": smoke_spec, "full": full_spec}


@dataclass
class RunReport:
    rows: list[dict]
    path: Path | None
    knobs: dict

    @property
    def ok(self) -> bool:
        return all(r.get(c) is True for r in self.rows for c in INVARIANTS)


@lru_cache(maxsize=32)
def _pointwise(k: int, delta: float) -> float:
    return pointwise_bound_ratio(k, delta)


def _max(vals):
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return max(vals) if vals else None


def _min(vals):
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return min(vals) if vals else None


def _whitney_ok(omega, cubes) -> bool:
    cover = np.zeros(omega.mask.shape, np.int32)
    for wc in cubes:
        cover[wc.cube.slices] += 1
    if not np.array_equal(cover > 0, omega.mask) or cover.max(initial=0) > 1:
        return False
    for wc in cubes:
        if wc.dist > 4 * wc.diam * (1 + 1e-12):
            return False
        if not wc.floor and wc.dist < wc.diam * (1 - 1e-12):
            return False
    return True


def run_row(f: GranularFunction, alpha: float, spec: ExperimentSpec, row_id: str,
            out_dir: Path | None = None) -> dict:
    """Every pipeline stage on one (f, alpha); returns the row of recorded constants."""
    lat = f.lattice
    knobs = spec.knobs
    rng = ScaleRange(spec.kmin, spec.kmax).check(lat.delta)
    ks = list(rng)
    row: dict = {"n": lat.n, "delta": lat.delta, "kmin": spec.kmin, "kmax": spec.kmax,
                 "mass": f.mass, "alpha": alpha}

    # endpoint surrogate
    Mf = lacunary_maximal(f, rng)
    row["weak_type"] = weak_type_ratio(f, alpha, Mf=Mf)
    row["extrap_eps1"] = extrapolation_ratio(f, alpha, 1.0, Mf=Mf)
    row["extrap_eps01"] = extrapolation_ratio(f, alpha, 0.1, Mf=Mf)
    levels = level_split(f, alpha)
    row["n_levels"] = len(levels)
    total = sum((p.values for _, p in levels), np.zeros_like(f.values))
    disjoint = sum(((p.values != 0).astype(int) for _, p in levels), np.zeros(f.values.shape, int))
    row["inv_level_split"] = bool(np.array_equal(total, f.values) and disjoint.max(initial=0) <= 1)
    row["C_pt"] = max(_pointwise(k, lat.delta) for k in ks)

    # Calderon-Zygmund stage
    omega = superlevel(hardy_littlewood(f), alpha)
    row["omega_measure"] = omega.measure
    row["inv_weak11"] = bool(alpha * omega.measure <= f.mass * (1 + 1e-12))
    cubes = whitney(omega)
    row["n_whitney"] = len(cubes)
    row["n_floor"] = sum(wc.floor for wc in cubes)
    row["inv_whitney"] = _whitney_ok(omega, cubes)
    basis = PolyBasis.build(2)
    proj, mom = [], []
    splits = []
    recon_ok = True
    widths = []
    for wc in cubes:
        q = wc.cube
        fq = f.restrict(q)
        root = fq.lattice.root()
        top = float(fq.values.max())
        proj.append(projection_constant(fq, root, basis))
        if top > 0:
            b = bad_part(fq, root, basis)
            mom.append(float(np.abs(moments(b, root, basis)).max()) / top)
        ladder = gamma_ladder(alpha, q.side)
        pieces = decompose(fq, q, ladder)
        rec = reconstruct(pieces)
        sup = sum((p.f.values != 0).astype(int) for p in pieces)
        recon_ok &= bool(np.abs(rec.values - fq.values).max() <= 1e-12 and sup.max() <= 1)
        widths.append(verify_widths(pieces))
        splits.append(CubeSplit(q, wc.dist, ladder, pieces))
    row["C_proj"] = _max(proj)
    row["moment_max"] = _max(mom)
    row["inv_moments"] = bool(row["moment_max"] is None or row["moment_max"] <= 1e-9)
    row["inv_reconstruct"] = recon_ok
    row["r_min"] = _min([w.r_min for w in widths])
    row["r_max"] = _max([w.r_max for w in widths])
    row["w_max"] = _max([w.w_max for w in widths])
    row["n_pieces"] = sum(1 for cs in splits for p in cs.pieces if p.mass > 0)

    # regimes and the global exceptional union
    amb = expanded_lattice(lat)
    report = regime_exceptional(f, alpha, ks, knobs, amb, split=(omega, splits))
    row["C_A"] = report.ratio

    # detailed height analysis on the heaviest pieces with a nonempty K2 band
    cand = []
    for cs in splits:
        for p in cs.pieces[1:]:
            if p.mass > 0:
                kk = k2_scales(p, ks, alpha, knobs)
                if kk:
                    cand.append((p, kk))
    cand.sort(key=lambda t: (-t[0].mass, t[0].q.level, t[0].q.i, t[0].q.j, t[0].j))
    cand = cand[:spec.max_detail_pieces]
    size, l1, l1i, l2, ess, k3, supp, resid, dom = [], [], [], [], [], [], [], [], []
    tail_ok = True
    for p, kk in cand:
        profs = []
        for k in kk:
            prof = profile_for(p, k, alpha, knobs, ambient=lat)
            profs.append(prof)
            dec = telescope(prof)
            resid.append(dec.residual())
            cfg = ExceptionalConfig(alpha, p.gamma, k, p.q.side, height_parameter(k, p.gamma, alpha), 2, knobs)
            S = exceptional_set(p, cfg, prof.ladder, amb, clip=True)
            tail = heavy_tail_support(prof).embed(amb)
            tail_ok &= bool(tail <= S.S)
            size.append(S.measure * cfg.M / (2.0 ** k * p.length))
            l2.append(l2_light(prof, dec.light))
            ess.append(l2_global_scale_bound(p.f, k, p.gamma, alpha, conv=dec.total))
            supp.append(support_size_ratio(p, k, dec.total))
            if not dom and prof.ladder.N >= 1:
                dom.append(domination_constant(prof.ladder, k, lat.delta))
        l1.extend(per_offset_l1(profs, p.mass))
        l1i.append(l1_intermediate(profs, p.mass, alpha))
        k3.append(k3_tail_ratio(p.f, ks, p.gamma, alpha, p.q.side, knobs))
    row.update(C_size=_max(size), C_L1=_max(l1), L1_int=_max(l1i), C_L2=_max(l2), C_2ess2=_max(ess),
               K3_tail=_max(k3), C_supp=_max(supp), C_dom=_max(dom), telescope_residual=_max(resid))
    row["inv_tail_in_A"] = tail_ok
    row["inv_telescope"] = bool(row["telescope_residual"] is None or row["telescope_residual"] <= 1e-10)

    if out_dir is not None and spec.dump_exceptional:
        write_pgm(omega, out_dir / f"{row_id}_omega.pgm")
        write_pgm(report.A, out_dir / f"{row_id}_exceptional.pgm")
    return row


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run(spec: ExperimentSpec, write: bool = True) -> RunReport:
    out_dir = Path(spec.out) if write else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    lat = unit_lattice(spec.grid)
    rows = []
    for fam in spec.families:
        for seed in spec.seeds:
            try:
                f, gen_error = generate(fam.name, lat, seed=seed, **fam.params), None
            except Exception as exc:  # generation failures are recorded on every row of the family
                f, gen_error = None, exc
            for alpha in spec.alphas:
                row_id = f"{len(rows):03d}"
                t0 = time.perf_counter()
                base = {"row": row_id, "family": fam.name, "label": fam.tag, "seed": seed}
                try:
                    if gen_error is not None:
                        raise gen_error
                    row = run_row(f, alpha, spec, row_id, out_dir)
                    row["error"] = ""
                except Exception as exc:  # a failed row is recorded, the run continues
                    log.exception("row %s failed", row_id)
                    row = {"alpha": alpha, "error": f"{type(exc).__name__}: {exc}"}
                    row.update({c: False for c in INVARIANTS})
                row.update(base)
                row["time_s"] = round(time.perf_counter() - t0, 3)
                rows.append(row)
                log.info("row %s %s seed=%s alpha=%g done in %.2fs", row_id, fam.tag, seed, alpha, row["time_s"])
    path = None
    if out_dir is not None:
        path = out_dir / "report.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema={SCHEMA_VERSION} knobs={json.dumps(spec.knobs.as_dict(), sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in rows:
                w.writerow([_fmt(r.get(c)) for c in COLUMNS])
    return RunReport(rows, path, spec.knobs.as_dict())


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
