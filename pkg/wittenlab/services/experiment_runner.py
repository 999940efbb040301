"""
Experiment Runner - Main Entry Point.
Builds complexes and fields from a manifest, runs one named experiment and
writes results.csv, summary.json and plotdata/*.csv.

Experiments:
  spectrum         harmonic/exact/coexact spectra per degree
  duality          phi -> -phi duality on circles and tori
  kunneth          product spectra against sums of factor spectra
  collapse         eps-sweep of the collapse family against d_p and U spectra
  puncture         radius sweep of a punctured torus against the closed one
  conformal-sweep  mu_{p,1} Vol^{2/n} over random conformal factors in a class
  three-forms      the three assemblies of the twisted Laplacian
  oracle           brute-force min-max and continuum oracles
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from config import (
    DEFAULT_SEED,
    DENSE_THRESHOLD,
    EIGEN_ASSERT_TOL,
    MAX_WORKERS,
    OUTPUT_DIR,
    SOLVER_TOLERANCE,
    WRITE_EIGENCOCHAINS,
)
from errors import ManifestError, WittenLabError
from models.schemas import AssertionRecord, ComplexSpec, ExperimentManifest, ExperimentSummary, FieldSpec, MeshFile
from models.types import (
    BoundaryCondition,
    CellComplex,
    DomainTag,
    FactorKind,
    FactorSpec,
    GapConfig,
    Geometry,
    WeightField,
)
from services import cohomology, deform, export, fields, meshes, model1d, spectral
from services.complex import product_grid, tag_domain
from services.witten_ops import build_bundle, conformal_rescale, geometry_from_complex, weight_from_vertices

logger = logging.getLogger(__name__)

STATEMENTS = {
    "spectrum": "Harmonic dimensions equal Betti numbers in every degree, independent of phi and u; "
                "the exact spectrum in degree p is the coexact spectrum in degree p-1.",
    "duality": "The Hodge star intertwines the Witten Laplacians of phi and -phi, so coexact spectra "
               "in degree p for phi match those in degree n-p-1 for -phi.",
    "kunneth": "On a product with phi = phi1 + phi2 the Witten Laplacian splits as a sum, so product "
               "eigenvalues in degree q are sums of factor eigenvalues in degrees a and q-a.",
    "collapse": "Collapsing M minus U with (eps^2 g, phi - alpha ln eps) drives exactly d_p = dim H^p(U/M) "
                "coexact eigenvalues to zero for p < n/2 + alpha - 1, and the following ones converge "
                "to the absolute spectrum of U.",
    "puncture": "Removing a ball of radius eps, with phi made constant near it, changes the coexact "
                "spectrum and its eigenspaces continuously: both converge as eps -> 0.",
    "conformal-sweep": "In a conformal weighted class, mu_{p,1} Vol^{2/n} stays bounded below in the "
                       "protected degrees and can be driven to zero outside them.",
    "three-forms": "The twisted Laplacian equals Delta + |X|^2 + L_X + L_X^* and Delta + |X|^2 - div X "
                   "+ 2 (symmetric gradient of X-flat); for non-gradient X, d~_X^2 is wedge with dX-flat.",
    "oracle": "mu_{p,i} is the i-th min-max value of ||omega||^2 / ||omega||_*^2 over exact (p+1)-cochains, "
              "and continuum Witten spectra match their Fourier and Hermite oracles.",
}

GENERATORS: Dict[str, Callable[..., CellComplex]] = {
    "icosphere": meshes.icosphere,
    "torus": meshes.torus_mesh,
    "cycle": meshes.cycle_graph,
    "triangle": meshes.triangle,
}


class RunContext(BaseModel):
    """Per-run overrides from the command line"""
    seed: int = DEFAULT_SEED
    tol: float = SOLVER_TOLERANCE
    dense_threshold: int = DENSE_THRESHOLD
    out_dir: Path


class ExperimentOutcome(BaseModel):
    """What an experiment hands back to the runner"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[Tuple] = []
    assertions: List[AssertionRecord] = []
    metrics: Dict[str, Any] = {}
    plots: Dict[str, Tuple[List[str], List[Sequence]]] = {}

    def check(self, name: str, passed: bool, value: Optional[float] = None,
              threshold: Optional[float] = None, detail: Optional[str] = None) -> bool:
        value = None if value is None else float(value)
        self.assertions.append(AssertionRecord(
            name=name, passed=bool(passed), value=value, threshold=threshold, detail=detail
        ))
        if not passed:
            logger.warning(f"[ASSERT] {name} failed: value={value} threshold={threshold} {detail or ''}")
        return bool(passed)


# ============ Builders ============

def build_complex(spec: ComplexSpec) -> CellComplex:
    if spec.mesh is not None:
        return export.load_mesh(spec.mesh)
    if spec.product is not None:
        return product_grid(spec.product)
    generator = GENERATORS.get(spec.generator)
    if generator is None:
        raise ManifestError(f"Unknown generator '{spec.generator}'; choose from {sorted(GENERATORS)}")
    try:
        return generator(**spec.params)
    except TypeError as e:
        raise ManifestError(f"Bad parameters for generator '{spec.generator}': {e}")


def build_fields(complex: CellComplex, spec: FieldSpec,
                 default_phi: Optional[Sequence[float]] = None) -> Tuple[Geometry, WeightField]:
    """Geometry and weight from a FieldSpec; default_phi fills in when it gives neither phi nor phi_values"""
    if spec.phi_values is not None:
        phi = np.asarray(spec.phi_values, dtype=float)
    elif spec.phi is None and default_phi is not None:
        phi = np.asarray(default_phi, dtype=float)
    else:
        phi = fields.sample_field(spec.phi, complex.vertices)
    weight = weight_from_vertices(complex, phi)
    geometry = geometry_from_complex(complex)
    if spec.u is not None:
        u = fields.sample_field(spec.u, complex.vertices)
        geometry, weight = conformal_rescale(geometry, weight, u, 0.0, complex)
    return geometry, weight


def mesh_file(spec: Optional[ComplexSpec]) -> Optional[MeshFile]:
    if spec is None or spec.mesh is None:
        return None
    return export.read_mesh_file(spec.mesh)


def build_domain(manifest: ExperimentManifest, complex: CellComplex) -> DomainTag:
    """U from the manifest predicate, else from the cell list stored in the mesh file"""
    if manifest.domain is not None:
        return tag_domain(complex, fields.predicate(manifest.domain.predicate))
    mesh = mesh_file(manifest.complex)
    cells = export.mesh_domain(complex, mesh) if mesh is not None else None
    if cells is None:
        raise ManifestError(f"Experiment '{manifest.experiment}' needs a domain predicate or a mesh domain")
    return tag_domain(complex, cells)


def negate(weight: WeightField) -> WeightField:
    vertex_values = None if weight.vertex_values is None else -weight.vertex_values
    return WeightField(samples=[-s for s in weight.samples], vertex_values=vertex_values)


class ExperimentService:
    """
    Runs named experiments from manifests.

    One instance per process; run metrics accumulate across calls.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not hasattr(self, '_initialized'):
            self._experiments: Dict[str, Callable[[ExperimentManifest, RunContext], ExperimentOutcome]] = {
                "spectrum": self._spectrum,
                "duality": self._duality,
                "kunneth": self._kunneth,
                "collapse": self._collapse,
                "puncture": self._puncture,
                "conformal-sweep": self._conformal_sweep,
                "three-forms": self._three_forms,
                "oracle": self._oracle,
            }
            self._metrics = {
                "experiments_run": 0,
                "experiments_failed": 0,
                "assertions_passed": 0,
                "assertions_failed": 0,
            }
            self._initialized = True

    @property
    def experiments(self) -> List[str]:
        return sorted(self._experiments)

    def get_metrics(self) -> Dict[str, int]:
        return dict(self._metrics)

    def run(
        self,
        manifest: ExperimentManifest,
        out_dir: Optional[Path] = None,
        seed: Optional[int] = None,
        tol: Optional[float] = None,
        dense_threshold: Optional[int] = None,
    ) -> Dict[str, Any]:
        """Run one experiment, write its artifacts and return {"success": ..., "summary": ...}"""
        name = manifest.experiment
        if name not in self._experiments:
            raise ManifestError(f"Unknown experiment '{name}'; choose from {self.experiments}")
        ctx = RunContext(
            seed=seed if seed is not None else DEFAULT_SEED,
            tol=tol if tol is not None else (manifest.solver.tol or SOLVER_TOLERANCE),
            dense_threshold=(dense_threshold if dense_threshold is not None
                             else manifest.solver.dense_threshold or DENSE_THRESHOLD),
            out_dir=Path(out_dir or manifest.output or Path(OUTPUT_DIR) / name),
        )
        self._metrics["experiments_run"] += 1
        logger.info(f"[RUN] {name} -> {ctx.out_dir} (seed={ctx.seed}, tol={ctx.tol:g})")

        error = None
        try:
            outcome = self._experiments[name](manifest, ctx)
        except WittenLabError as e:
            logger.error(f"[RUN] {name} failed: {e}")
            outcome, error = ExperimentOutcome(), str(e)

        passed = sum(a.passed for a in outcome.assertions)
        failed = len(outcome.assertions) - passed
        self._metrics["assertions_passed"] += passed
        self._metrics["assertions_failed"] += failed
        success = error is None and failed == 0
        if not success:
            self._metrics["experiments_failed"] += 1

        summary = ExperimentSummary(
            experiment=name,
            statement=STATEMENTS[name],
            success=success,
            seed=ctx.seed,
            assertions=outcome.assertions,
            metrics=outcome.metrics,
            error=error,
        )
        export.write_results_csv(ctx.out_dir / "results.csv", outcome.rows)
        export.write_summary(ctx.out_dir / "summary.json", summary)
        for plot, (columns, rows) in outcome.plots.items():
            export.write_plotdata(ctx.out_dir, plot, columns, rows)
        logger.info(f"[RUN] {name}: {passed} passed, {failed} failed")
        return {"success": success, "error": error, "summary": summary}

    # ============ Helpers ============

    def _setup(self, manifest: ExperimentManifest) -> Tuple[CellComplex, Geometry, WeightField]:
        if manifest.complex is None:
            raise ManifestError(f"Experiment '{manifest.experiment}' needs a complex")
        complex = build_complex(manifest.complex)
        mesh = mesh_file(manifest.complex)
        geometry, weight = build_fields(complex, manifest.fields, mesh.phi if mesh else None)
        return complex, geometry, weight

    def _domain(self, manifest: ExperimentManifest, complex: CellComplex):
        return build_domain(manifest, complex)

    @staticmethod
    def _parallel(fn: Callable, items: Sequence) -> List:
        with ThreadPoolExecutor(max_workers=MAX_WORKERS) as pool:
            return list(pool.map(fn, items))

    # ============ spectrum ============

    def _spectrum(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        complex, geometry, weight = self._setup(manifest)
        opts, k = manifest.options, manifest.solver.k
        out = ExperimentOutcome()
        degrees = manifest.solver.degrees or list(range(complex.dimension + 1))
        bundle = build_bundle(complex, geometry, weight, manifest.solver.gauge, manifest.solver.scheme)
        betti = cohomology.betti_numbers(complex)
        out.metrics["betti"] = betti
        out.metrics["euler_characteristic"] = cohomology.euler_characteristic(complex)
        out.check("euler_characteristic", sum((-1) ** p * b for p, b in enumerate(betti)) == out.metrics["euler_characteristic"])

        base = {}
        for p in degrees:
            result = spectral.full_hodge_spectrum(bundle, p, k, ctx.tol, ctx.dense_threshold, ctx.seed)
            base[p] = result
            out.rows.extend(export.spectrum_rows(result))
            out.check(f"harmonic_dimension_p{p}", result.harmonic_dimension == betti[p],
                      value=result.harmonic_dimension, threshold=betti[p])
            if "pairing_deviation" in result.metadata:
                out.check(f"exact_pairing_p{p}", result.metadata["pairing_deviation"] <= EIGEN_ASSERT_TOL,
                          value=result.metadata["pairing_deviation"], threshold=EIGEN_ASSERT_TOL)
            if WRITE_EIGENCOCHAINS:
                export.write_eigencochains(ctx.out_dir / f"eigencochains_p{p}.npz", result)
        if "expected_harmonic" in opts:
            found = [base[p].harmonic_dimension for p in degrees]
            out.check("expected_harmonic", found == list(opts["expected_harmonic"]), detail=str(found))

        samples = int(opts.get("random_fields", 0))
        if samples:
            rng = np.random.default_rng(ctx.seed)
            amplitude = float(opts.get("amplitude", 1.0))
            worst = 0.0
            for s in range(samples):
                phi = fields.random_field(complex.vertices, rng, amplitude, periods=complex.periods)
                u = fields.random_field(complex.vertices, rng, 0.5 * amplitude, periods=complex.periods)
                g, w = conformal_rescale(geometry_from_complex(complex), weight_from_vertices(complex, phi),
                                         u, 0.0, complex)
                b = build_bundle(complex, g, w, manifest.solver.gauge, manifest.solver.scheme)
                for p in degrees:
                    r = spectral.full_hodge_spectrum(b, p, min(k, 4), ctx.tol, ctx.dense_threshold, ctx.seed)
                    out.check(f"random_field_{s}_harmonic_p{p}", r.harmonic_dimension == betti[p])
                    worst = max(worst, r.metadata.get("pairing_deviation", 0.0))
            out.check("random_fields_exact_pairing", worst <= EIGEN_ASSERT_TOL, value=worst, threshold=EIGEN_ASSERT_TOL)

        perturb = opts.get("perturb")
        if perturb:
            rng = np.random.default_rng(ctx.seed + 1)
            d_phi, d_u = float(perturb.get("phi", 0.0)), float(perturb.get("u", 0.0))
            shape_phi = fields.random_field(complex.vertices, rng, 1.0, periods=complex.periods)
            shape_u = fields.random_field(complex.vertices, rng, 1.0, periods=complex.periods)
            w = weight_from_vertices(complex, weight.vertex_values + d_phi * shape_phi)
            g, w = conformal_rescale(geometry, w, d_u * shape_u, 0.0, complex)
            b = build_bundle(complex, g, w, manifest.solver.gauge, manifest.solver.scheme)
            n = complex.dimension
            for p in degrees:
                if not base[p].coexact:
                    continue
                moved = spectral.coexact_spectrum(b, p, len(base[p].coexact), ctx.tol, ctx.dense_threshold, ctx.seed)
                drift = spectral.compare_spectra(base[p].coexact, moved.coexact)
                bound = np.expm1(4.0 * d_phi + (2 * n + 4 * p + 2) * d_u)
                out.metrics[f"perturbation_drift_p{p}"] = drift
                out.check(f"continuity_p{p}", drift <= bound * (1 + 1e-9), value=drift, threshold=float(bound))
        return out

    # ============ duality ============

    def _duality(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        opts = manifest.options
        out = ExperimentOutcome()
        expression = manifest.fields.phi or "0"
        k = manifest.solver.k

        grids = opts.get("circle_grids")
        if grids:
            neg = f"-({expression})"
            plot = []
            for nodes in grids:
                plus = model1d.circle_witten_spectrum(model1d.circle_grid(nodes, expression=expression), k)
                minus = model1d.circle_witten_spectrum(model1d.circle_grid(nodes, expression=neg), k)
                gap = float(np.max(np.abs(np.asarray(plus.functions) - np.asarray(minus.functions))))
                plot.append((nodes, gap))
                out.rows.extend((0, "coexact", i + 1, v, 0.0) for i, v in enumerate(plus.functions))
            out.plots["circle_duality"] = (["nodes", "max_difference"], plot)
            threshold = float(opts.get("circle_tol", 1e-4))
            out.check("circle_duality", plot[-1][1] < threshold, value=plot[-1][1], threshold=threshold)

        cells = opts.get("torus_cells")
        if cells:
            p = int(opts.get("degree", 0))
            errors = []
            for N in cells:
                complex = product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=N, length=2 * np.pi)] * 2)
                geometry, weight = build_fields(complex, manifest.fields)
                n = complex.dimension
                a = spectral.coexact_spectrum(build_bundle(complex, geometry, weight), p, k,
                                              ctx.tol, ctx.dense_threshold, ctx.seed)
                b = spectral.coexact_spectrum(build_bundle(complex, geometry, negate(weight)), n - p - 1, k,
                                              ctx.tol, ctx.dense_threshold, ctx.seed)
                errors.append(spectral.compare_spectra(a.coexact, b.coexact))
            orders = [np.log2(e0 / e1) for e0, e1 in zip(errors, errors[1:]) if e1 > 0]
            out.plots["torus_duality"] = (["cells", "relative_error"], list(zip(cells, errors)))
            out.metrics["torus_orders"] = orders
            min_order = float(opts.get("min_order", 1.0))
            out.check("torus_duality_order", bool(orders) and min(orders) >= min_order,
                      value=min(orders) if orders else None, threshold=min_order)
        return out

    # ============ kunneth ============

    def _kunneth(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        opts = manifest.options
        out = ExperimentOutcome()
        k = manifest.solver.k
        cells = int(opts.get("cells", 64))
        length = float(opts.get("length", 2 * np.pi))
        phi1, phi2 = opts.get("phi1", "0"), opts.get("phi2", "0")
        rtol = float(opts.get("rtol", 1e-9))

        def factor_spectra(expression: str) -> List[np.ndarray]:
            cx = product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=cells, length=length)])
            geometry, weight = build_fields(cx, FieldSpec(phi=expression))
            bundle = build_bundle(cx, geometry, weight)
            return [spectral.full_hodge_spectrum(bundle, p, cells - 1, ctx.tol, ctx.dense_threshold).all_eigenvalues()
                    for p in range(2)]

        first, second = factor_spectra(phi1), factor_spectra(phi2)
        factors = [FactorSpec(kind=FactorKind.CIRCLE, cells=cells, length=length)] * 2
        product = product_grid(factors)
        x, y, _ = fields.COORDINATES
        field = FieldSpec(phi=f"({phi1}) + ({fields.parse_field(phi2).subs(x, y)})")
        geometry, weight = build_fields(product, field)
        bundle = build_bundle(product, geometry, weight)

        lowest = {}
        for q in range(3):
            sums = np.sort(np.concatenate([
                np.add.outer(first[a], second[q - a]).ravel() for a in range(2) if 0 <= q - a <= 1
            ]))[:k]
            result = spectral.full_hodge_spectrum(bundle, q, k, ctx.tol, ctx.dense_threshold, ctx.seed)
            values = result.all_eigenvalues()[:k]
            lowest[q] = values
            out.rows.extend((q, "full", i + 1, v, 0.0) for i, v in enumerate(values))
            deviation = self._deviation(values, sums)
            out.check(f"kunneth_q{q}", deviation <= rtol, value=deviation, threshold=rtol)

        interval = opts.get("interval_factor")
        if interval:
            half = float(interval.get("half_width", 0.05))
            factors3 = factors + [FactorSpec(kind=FactorKind.INTERVAL, cells=int(interval.get("cells", 4)),
                                             length=2 * half)]
            product3 = product_grid(factors3)
            geometry3, weight3 = build_fields(product3, field)
            bundle3 = build_bundle(product3, geometry3, weight3)
            ceiling = (np.pi / (2 * half)) ** 2
            for q in range(3):
                values = spectral.full_hodge_spectrum(bundle3, q, k, ctx.tol, ctx.dense_threshold,
                                                      ctx.seed).all_eigenvalues()[:k]
                below = lowest[q][lowest[q] < ceiling]
                deviation = self._deviation(values[:len(below)], below)
                out.check(f"interval_factor_q{q}", deviation <= rtol, value=deviation, threshold=rtol)
        return out

    @staticmethod
    def _deviation(a: np.ndarray, b: np.ndarray) -> float:
        """Relative multiset deviation, absolute only for exact zeros"""
        a, b = np.sort(a), np.sort(b)
        m = min(len(a), len(b))
        if m == 0:
            return 0.0
        scale = np.where(np.abs(b[:m]) > 1e-12, np.abs(b[:m]), 1.0)
        return float(np.max(np.abs(a[:m] - b[:m]) / scale))

    # ============ collapse ============

    def _collapse(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        complex, geometry, weight = self._setup(manifest)
        domain = self._domain(manifest, complex)
        opts, k = manifest.options, manifest.solver.k
        alpha = manifest.fields.alpha
        n = complex.dimension
        epsilons = sorted(manifest.sweep.epsilons, reverse=True)
        if not epsilons:
            raise ManifestError("collapse needs a nonempty sweep.epsilons")
        decay = float(opts.get("decay_factor", 5.0))
        rel_tol = float(opts.get("rel_tol", 0.05))
        floor_fraction = float(opts.get("floor_fraction", 0.1))
        out = ExperimentOutcome()

        summary = cohomology.summarize(complex, domain)
        out.metrics["cohomology"] = summary.to_json()

        for p in manifest.solver.degrees:
            d = summary.degrees[p].quotient_dimension
            u_abs = spectral.domain_spectrum(complex, domain, BoundaryCondition.ABSOLUTE, geometry, weight,
                                             p, k, tol=ctx.tol, dense_threshold=ctx.dense_threshold)
            out.rows.extend((p, "domain-absolute", i + 1, v, r)
                            for i, (v, r) in enumerate(zip(u_abs.coexact, u_abs.coexact_residuals)))

            def solve(eps: float, p=p, d=d):
                g, w = deform.collapse_family(geometry, weight, domain, eps, alpha)
                bundle = build_bundle(complex, g, w)
                return spectral.coexact_spectrum(bundle, p, d + k, ctx.tol, ctx.dense_threshold, ctx.seed)

            results = self._parallel(solve, epsilons)
            trajectory = [(eps, i + 1, v) for eps, r in zip(epsilons, results) for i, v in enumerate(r.coexact)]
            out.plots[f"collapse_p{p}"] = (["epsilon", "index", "eigenvalue"], trajectory)
            out.metrics[f"d_{p}"] = d

            if manifest.sweep.js:
                js = sorted(manifest.sweep.js)

                def smooth(j: int, p=p, d=d):
                    g, w = deform.smoothing_sequence(complex, geometry, weight, domain, epsilons[-1], j, alpha)
                    return spectral.coexact_spectrum(build_bundle(complex, g, w), p, d + k,
                                                     ctx.tol, ctx.dense_threshold, ctx.seed)

                smoothed = self._parallel(smooth, js)
                limit = results[-1].coexact
                out.plots[f"smoothing_p{p}"] = (
                    ["j", "index", "eigenvalue", "collapse_value"],
                    [(j, i + 1, v, limit[i]) for j, s in zip(js, smoothed) for i, v in enumerate(s.coexact)],
                )
                slack = float(opts.get("smoothing_slack", 1e-9))
                for i, target in enumerate(limit):
                    series = [s.coexact[i] for s in smoothed]
                    out.check(f"smoothing_decreases_p{p}_i{i + 1}", deform.decreases_toward(series, target, slack),
                              value=series[-1], threshold=target, detail=str(series))

            if p < n / 2 + alpha - 1:
                for i in range(d):
                    series = [r.coexact[i] for r in results]
                    ratios = [a / b for a, b in zip(series, series[1:])]
                    out.check(f"vanishing_p{p}_i{i + 1}", bool(ratios) and min(ratios) >= decay,
                              value=min(ratios) if ratios else None, threshold=decay)
                limit = results[-1].coexact[d:d + k]
                deviation = spectral.compare_spectra(u_abs.coexact[:len(limit)], limit)
                out.check(f"converges_to_U_absolute_p{p}", deviation <= rel_tol, value=deviation, threshold=rel_tol)
            elif p >= n / 2 + alpha:
                floor = min(r.coexact[0] for r in results)
                target = floor_fraction * u_abs.coexact[0]
                out.metrics[f"protected_floor_p{p}"] = floor
                out.check(f"protected_lower_bound_p{p}", floor >= target, value=floor, threshold=target)

            if opts.get("dual"):
                self._collapse_dual(complex, geometry, weight, domain, p, d, k, alpha, epsilons[-1], rel_tol, ctx, out)

        complement = tag_domain(complex, ~domain.top_mask)
        flat = weight_from_vertices(complex)
        reference = spectral.domain_spectrum(complex, complement, BoundaryCondition.DIRICHLET, geometry, flat,
                                             0, 1, tol=ctx.tol, dense_threshold=ctx.dense_threshold)
        out.metrics["dirichlet_reference"] = reference.all_eigenvalues()[reference.harmonic_dimension]
        return out

    def _collapse_dual(self, complex, geometry, weight, domain, p, d, k, alpha, epsilon, rel_tol, ctx, out) -> None:
        """-phi at degree n-p-1 with the dual family against the relative spectrum of U"""
        q = complex.dimension - p - 1
        minus = negate(weight)
        u_rel = spectral.domain_spectrum(complex, domain, BoundaryCondition.RELATIVE, geometry, minus,
                                         q, k, tol=ctx.tol, dense_threshold=ctx.dense_threshold)
        g, w = deform.collapse_family(geometry, minus, domain, epsilon, -alpha)
        bundle = build_bundle(complex, g, w)
        wanted = min(spectral.coexact_rank(bundle, q), d + k)
        result = spectral.coexact_spectrum(bundle, q, wanted, ctx.tol, ctx.dense_threshold, ctx.seed)
        limit = result.coexact[d:d + k]
        deviation = spectral.compare_spectra(u_rel.coexact[:len(limit)], limit)
        out.rows.extend((q, "domain-relative", i + 1, v, r)
                        for i, (v, r) in enumerate(zip(u_rel.coexact, u_rel.coexact_residuals)))
        out.metrics[f"dual_limit_q{q}"] = list(limit)
        out.check(f"dual_converges_to_U_relative_q{q}", deviation <= rel_tol, value=deviation, threshold=rel_tol)

    # ============ puncture ============

    def _puncture(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        complex, geometry, weight = self._setup(manifest)
        opts, k = manifest.options, manifest.solver.k
        center = int(opts.get("center", 0))
        unit = float(opts.get("radius_unit", 1.0))
        radii = sorted(manifest.sweep.radii, reverse=True)
        if not radii:
            raise ManifestError("puncture needs a nonempty sweep.radii")
        final_tol = float(opts.get("final_tol", 0.02))
        out = ExperimentOutcome()
        closed_bundle = build_bundle(complex, geometry, weight)

        for p in manifest.solver.degrees:
            closed = spectral.coexact_spectrum(closed_bundle, p, k + 1, ctx.tol, ctx.dense_threshold, ctx.seed)
            out.rows.extend((p, "coexact", i + 1, v, r)
                            for i, (v, r) in enumerate(zip(closed.coexact, closed.coexact_residuals)))
            gap_n = self._gap_index(closed.coexact, int(opts.get("gap_n", 3)))

            def solve(radius: float, p=p):
                domain, w = deform.puncture_family(complex, weight, center, radius * unit)
                result = spectral.domain_spectrum(complex, domain, BoundaryCondition.ABSOLUTE, geometry, w,
                                                  p, k, tol=ctx.tol, dense_threshold=ctx.dense_threshold)
                cells = np.flatnonzero(domain.inside[p])
                return result, spectral.extend_by_zero(result, cells, complex.counts[p], closed_bundle.masses[p])

            results = self._parallel(solve, radii)
            errors = [spectral.compare_spectra(closed.coexact[:k], r.coexact) for r, _ in results]
            out.plots[f"puncture_p{p}"] = (["radius", "relative_error"], list(zip(radii, errors)))
            out.check(f"puncture_final_error_p{p}", errors[-1] < final_tol, value=errors[-1], threshold=final_tol)
            out.check(f"puncture_error_decreasing_p{p}",
                      all(b <= a * (1 + 1e-9) for a, b in zip(errors, errors[1:])), detail=str(errors))

            if gap_n:
                lam = closed.coexact
                cfg = GapConfig(n=gap_n, eta=0.5 * (lam[gap_n] - lam[gap_n - 1]), m_bound=2.0 * lam[gap_n])
                distances = [spectral.spectral_distance(closed, extended, cfg) for _, extended in results]
                out.metrics[f"spectral_distance_p{p}"] = distances
                out.check(f"eigenspace_convergence_p{p}",
                          all(b <= a * (1 + 1e-9) for a, b in zip(distances, distances[1:])), detail=str(distances))
        return out

    @staticmethod
    def _gap_index(values: Sequence[float], wanted: int) -> int:
        """Largest N <= wanted with a relative gap after the N-th eigenvalue"""
        for N in range(min(wanted, len(values) - 1), 0, -1):
            if values[N] - values[N - 1] > 1e-3 * values[N - 1]:
                return N
        return 0

    # ============ conformal-sweep ============

    def _conformal_sweep(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        complex, geometry, weight = self._setup(manifest)
        opts, n = manifest.options, complex.dimension
        alpha = manifest.fields.alpha
        samples = manifest.sweep.samples or 20
        amplitude = float(opts.get("amplitude", 1.0))
        floor_fraction = float(opts.get("floor_fraction", 0.1))
        out = ExperimentOutcome()

        def scaled(g: Geometry, w: WeightField, p: int) -> float:
            result = spectral.coexact_spectrum(build_bundle(complex, g, w), p, 1, ctx.tol, ctx.dense_threshold,
                                               ctx.seed)
            return result.coexact[0] * g.total_volume() ** (2.0 / n)

        def sample(s: int):
            rng = np.random.default_rng(ctx.seed + s)
            u = fields.random_field(complex.vertices, rng, amplitude, periods=complex.periods)
            g, w = conformal_rescale(geometry, weight, u, alpha, complex)
            return [scaled(g, w, p) for p in manifest.solver.degrees]

        base = [scaled(geometry, weight, p) for p in manifest.solver.degrees]
        values = np.array(self._parallel(sample, range(samples)))
        floors = values.min(axis=0)

        collapsed = None
        if manifest.domain is not None:
            domain = self._domain(manifest, complex)
            eps = float(opts.get("collapse_epsilon", 1e-3))
            g, w = deform.collapse_family(geometry, weight, domain, eps, alpha)
            collapsed = [scaled(g, w, p) for p in manifest.solver.degrees]

        protected = []
        for j, p in enumerate(manifest.solver.degrees):
            out.rows.append((p, "scaled-floor", 1, float(floors[j]), 0.0))
            holds = floors[j] >= floor_fraction * base[j]
            if collapsed is not None:
                holds = holds and collapsed[j] >= floor_fraction * base[j]
            if holds:
                protected.append(p)
            out.check(f"positive_floor_p{p}", floors[j] > 0.0, value=floors[j], threshold=0.0)
        out.plots["conformal_sweep"] = (["sample"] + [f"p{p}" for p in manifest.solver.degrees],
                                        [(s, *row) for s, row in enumerate(values.tolist())])
        out.metrics.update({
            "base": base,
            "floors": floors.tolist(),
            "collapsed": collapsed,
            "window_lower_alpha": [n / 2 - alpha - 1, n / 2 - alpha],
            "window_upper_alpha": [n / 2 + alpha - 1, n / 2 + alpha],
            "protected_degrees": protected,
        })
        return out

    # ============ three-forms ============

    def _three_forms(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        opts = manifest.options
        out = ExperimentOutcome()
        dim = int(opts.get("dimension", 1))
        sizes = manifest.sweep.refinements or ([64, 128] if dim == 1 else [16, 32])
        min_order = float(opts.get("min_order", 2.0))

        def grid_for(N):
            return model1d.circle_grid(N) if dim == 1 else model1d.product_grid_2d(N, N)

        def twist_for(grid):
            if "components" in opts:
                return model1d.twist_from_components(grid, opts["components"])
            return model1d.twist_from_potential(grid, manifest.fields.phi or "cos(x)")

        # the curvature form only holds for gradient twists
        gradient = "components" not in opts
        for p in manifest.solver.degrees:
            for coefficient in ((2.0, 1.0) if gradient else (2.0,)):
                reports = [model1d.assemble_three_forms(grid_for(N), twist_for(grid_for(N)), p, coefficient)
                           for N in sizes]
                ab = [r.diff_direct_lie for r in reports]
                ac = [r.diff_direct_curvature for r in reports]
                out.plots[f"three_forms_p{p}_c{int(coefficient)}"] = (
                    ["nodes", "direct_vs_lie", "direct_vs_curvature"], list(zip(sizes, ab, ac))
                )
                order_ab = np.log2(ab[0] / ab[1]) if ab[1] > 0 else np.inf
                order_ac = np.log2(ac[0] / ac[1]) if ac[1] > 0 else np.inf
                if coefficient == 2.0:
                    out.check(f"lie_form_order_p{p}", order_ab >= min_order or ab[-1] < 1e-10,
                              value=order_ab, threshold=min_order)
                    if gradient:
                        out.check(f"curvature_form_order_p{p}", order_ac >= min_order or ac[-1] < 1e-10,
                                  value=order_ac, threshold=min_order)
                elif p >= 1:
                    out.check(f"coefficient_one_stagnates_p{p}", order_ac < 0.5, value=order_ac, threshold=0.5)

        if dim == 2 and "components" in opts:
            errors = []
            for N in sizes:
                grid = grid_for(N)
                twist = twist_for(grid)
                square = model1d.twisted_square_on_constant(grid, twist)
                errors.append(float(np.max(np.abs(square - twist.exact_curl))))
            order = np.log2(errors[0] / errors[1]) if errors[1] > 0 else np.inf
            out.metrics["square_errors"] = errors
            out.check("twisted_square_is_curl", order >= min_order or errors[-1] < 1e-10, value=order,
                      threshold=min_order)
        return out

    # ============ oracle ============

    def _oracle(self, manifest: ExperimentManifest, ctx: RunContext) -> ExperimentOutcome:
        opts = manifest.options
        out = ExperimentOutcome()
        rng = np.random.default_rng(ctx.seed)
        rtol = float(opts.get("rtol", 1e-10))

        count = int(opts.get("random_complexes", 25))
        worst = 0.0
        for c in range(count):
            complex = (meshes.random_planar_complex(int(rng.integers(20, 60)), rng) if c % 5
                       else meshes.cycle_graph(int(rng.integers(3, 40))))
            phi = rng.normal(scale=0.5, size=complex.counts[0])
            bundle = build_bundle(complex, geometry_from_complex(complex), weight_from_vertices(complex, phi))
            for p in range(complex.dimension):
                rank = spectral.coexact_rank(bundle, p)
                k = min(manifest.solver.k, rank)
                if k == 0:
                    continue
                solved = spectral.coexact_spectrum(bundle, p, k, ctx.tol, ctx.dense_threshold, ctx.seed)
                brute = [spectral.minmax_bruteforce(bundle, p, i) for i in range(1, k + 1)]
                worst = max(worst, float(np.max(np.abs(np.asarray(brute) - solved.coexact)
                                                / np.asarray(solved.coexact))))
        if count:
            out.check("minmax_matches_solver", worst <= rtol, value=worst, threshold=rtol)

        if opts.get("continuum", True):
            hermite = model1d.interval_witten_spectrum(
                model1d.interval_grid(int(opts.get("hermite_cells", 2000)), -8.0, 8.0, "x**2/2"),
                BoundaryCondition.ABSOLUTE, 4,
            )
            deviation = float(np.max(np.abs(np.asarray(hermite[1:4]) - [2.0, 4.0, 6.0])))
            out.rows.extend((0, "coexact", i, v, 0.0) for i, v in enumerate(hermite))
            out.check("hermite_oracle", deviation <= 1e-2, value=deviation, threshold=1e-2)

            circle = model1d.circle_witten_spectrum(model1d.circle_grid(int(opts.get("circle_nodes", 512))), 7)
            expected = np.array([1.0, 1.0, 4.0, 4.0, 9.0, 9.0])
            relative = float(np.max(np.abs(np.asarray(circle.functions[1:7]) - expected) / expected))
            out.check("fourier_oracle", relative <= 5e-3, value=relative, threshold=5e-3)
        return out


# Global instance
experiment_service = ExperimentService()
