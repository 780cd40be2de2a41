# /src/services/experiments.py
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import mpmath
import numpy as np
from loguru import logger
from mpmath import mpf

from src.adapters.cache import ScaleCache
from src.adapters.export import certificate_payload, packing_rows, write_csv, write_json
from src.config import configure_precision, get_config
from src.integrations import cantor, constructions, dimfunc, packing
from src.models.cantor import CantorModel
from src.models.dimension import DimensionFunction
from src.models.experiment import ExperimentConfig, OutputEntry, RunRecord
from src.models.reports import ConstructionReport, OrderVerdict
from src.models.sequences import DeltaSequence, FinitePointSet
from src.utils.misc import now_s, sha256_file, sha256_payload, validate_output_dir
from src.utils.numerics import decimal_str, log2, to_fraction
from src.utils.parallel import parallel_map

cfg = get_config()

# packings above this size are certified structurally and not written row by row
PACKING_EXPORT_LIMIT = 1 << 14


def _optimize_trial(task: Tuple) -> Dict:
    # module level so the pool can pickle it
    index, entropy, n_centers, radii, g, delta = task
    rng = np.random.default_rng(entropy)
    centers = packing.random_candidates(rng, n_centers, radii)
    candidates = packing.candidate_balls(centers, radii)
    exact = packing.brute_force_packing(candidates, g, delta)
    dp = packing.optimize_packing_1d(centers, radii, g, delta)
    greedy = packing.greedy_packing(centers, radii, g, delta)
    return {
        "trial": index,
        "candidates": len(candidates),
        "brute_force_weight": exact.weight,
        "dp_weight": dp.weight,
        "greedy_weight": greedy.weight,
        "equal": exact.weight == dp.weight,
        "dominated": greedy.weight <= dp.weight,
        "verified": exact.verified and dp.verified and greedy.verified,
    }


class ExperimentServices:
    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.out: Path = validate_output_dir(config.out)
        self.record = RunRecord(
            command=config.command,
            config_hash=self.config_hash(config),
            precision=config.precision,
            seed=config.seed,
        )
        configure_precision(config.precision)
        self.h: Optional[DimensionFunction] = self._gauge(config.h, "h")
        self.g: Optional[DimensionFunction] = self._gauge(config.g, "g")


    # Public API
    def run(self) -> RunRecord:
        config = self.config
        logger.info(f"Running '{config.command}' at {config.precision} bits into {self.out}")
        handler = getattr(self, "_" + config.command.replace("-", "_"))
        handler()
        self.emit_plotdata()

        record = self.record
        record.finished_at = now_s()
        path = self.out / "run_record.json"
        path.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
        status = "PASS" if record.passed else "FAIL"
        logger.info(f"{config.command}: {status} ({sum(record.summary.values())}/{len(record.summary)} flags)")
        return record

    def emit_plotdata(self) -> List[Path]:
        """Write each recorded series as plot_<name>.csv."""
        record = self.record
        if not record.series:
            logger.warning(f"Run record for '{record.command}' carries no plot series")
            return []
        paths = []
        for name, columns in record.series.items():
            path = self.out / f"plot_{name}.csv"
            rows = [dict(zip(columns, values)) for values in zip(*columns.values())]
            count = write_csv(rows, path)
            record.outputs.append(OutputEntry(name=path.name, sha256=sha256_file(path), rows=count))
            paths.append(path)
        return paths

    @staticmethod
    def config_hash(config: ExperimentConfig) -> str:
        return sha256_payload(config.model_dump(mode="json", exclude={"out", "workers"}))


    # Run state
    def _gauge(self, spec, label: str) -> Optional[DimensionFunction]:
        if spec is None:
            return None
        return dimfunc.make_builtin(spec, precision=self.config.precision, label=label)

    def _model(self) -> CantorModel:
        params = self.config.model
        return cantor.build_model(self.h, params.d, params.depth, params.tolerance_bits, ScaleCache())

    def _csv(self, name: str, rows: List[Dict]) -> Path:
        path = self.out / name
        count = write_csv(rows, path)
        self.record.outputs.append(OutputEntry(name=name, sha256=sha256_file(path), rows=count))
        return path

    def _json(self, name: str, payload) -> Path:
        path = self.out / name
        write_json(payload, path)
        self.record.outputs.append(OutputEntry(name=name, sha256=sha256_file(path)))
        return path

    def _flag(self, name: str, passed: bool) -> None:
        self.record.summary[name] = bool(passed)

    def _value(self, name: str, value) -> None:
        self.record.values[name] = decimal_str(value) if isinstance(value, (mpf, Fraction)) else str(value)

    def _series(self, name: str, columns: Dict[str, List]) -> None:
        self.record.series[name] = {
            key: [decimal_str(v) if isinstance(v, (mpf, Fraction)) else str(v) for v in values]
            for key, values in columns.items()
        }

    def _checks(self, report: ConstructionReport) -> None:
        for check in report.checks:
            self._flag(check.name, check.passed)


    # Commands
    def _scales(self) -> None:
        model = self._model()
        d = model.d
        rows = []
        for n, a in enumerate(model.scales.values):
            target = mpmath.ldexp(1, -d * n)
            value = self.h.eval(a)
            rows.append({"n": n, "a_n": a, "h_a_n": value, "target": target, "rel_residual": abs(value - target) / target})
        self._csv("scales.csv", rows)
        self._flag("separation_ok", model.scales.separation_ok)
        self._flag("dyadic_bound_ok", model.scales.dyadic_bound_ok)
        self._value("max_residual", model.scales.max_residual)
        self._value("evaluations", model.scales.evaluations)
        self._series("scales", {"n": [r["n"] for r in rows], "log2_a_n": [log2(r["a_n"]) for r in rows]})

    def _density(self) -> None:
        config = self.config
        model = self._model()
        report = cantor.density_report(model, count=config.samples, seed=config.seed, workers=config.workers)
        rows = []
        for s in report.samples:
            row = {"index": s.index}
            row.update({f"x{j}": v for j, v in enumerate(s.x)})
            row.update({
                "r": s.r,
                "n": s.n,
                "mu_lo": s.mu.lo,
                "mu_hi": s.mu.hi,
                "lower_bound": s.lower_bound,
                "upper_bound": s.upper_bound,
                "mass_lower_ok": s.mass_lower_ok,
                "mass_upper_ok": s.mass_upper_ok,
                "scale_lower_ok": s.scale_lower_ok,
                "scale_upper_ok": s.scale_upper_ok,
                "density_ratio": s.density_ratio,
                "pass": s.passed,
            })
            rows.append(row)
        self._csv("density.csv", rows)
        self._json("report.json", {
            "d": report.d,
            "depth": report.depth,
            "samples": len(report.samples),
            "failures": report.failures,
            "density_constant": decimal_str(report.density_constant),
            "seed": report.seed,
        })
        self._flag("density_all_pass", report.passed)
        self._value("density_constant", report.density_constant)
        self._series("density", {
            "log2_r": [log2(s.r) for s in report.samples],
            "log2_density_ratio": [log2(s.density_ratio) for s in report.samples],
        })

    def _cover(self) -> None:
        config = self.config
        model = self._model()
        reports = cantor.cover_sweep(model, config.ks, config.n_max, config.workers)
        rows = [
            {
                "k": r.k,
                "ball_count": r.ball_count,
                "dedup_ball_count": r.dedup_ball_count,
                "mass_upper_all": r.mass_upper_all,
                "mass_upper_dedup": r.mass_upper_dedup,
                "bound_sum": r.bound_sum,
                "closed_form_bound": r.closed_form_bound,
                "decay_ratio": r.decay_ratio if r.decay_ratio is not None else "",
                "log2_decay": r.log2_decay if r.log2_decay is not None else "",
            }
            for r in reports
        ]
        self._csv("cover.csv", rows)
        expected = mpmath.ldexp(1, -model.d)
        decay_ok = all(
            abs(b.decay_ratio - expected ** (b.k - a.k)) <= mpf("1e-6")
            for a, b in zip(reports, reports[1:])
        )
        self._flag("dedup_within_all", all(r.dedup_within_all for r in reports))
        self._flag("within_bound", all(r.within_bound for r in reports))
        self._flag("decay_ratio_ok", decay_ok)
        self._series("cover", {"k": [r.k for r in reports], "log2_bound_sum": [log2(r.bound_sum) for r in reports]})

    def _diverge(self) -> None:
        model = self._model()
        delta = to_fraction(self.config.delta)
        trace = packing.divergence_trace(model, self.g, delta)
        self._csv("trace.csv", [{"m": m, "weight": w, "log2_weight": log2(w)} for m, w in trace])
        self._series("divergence", {"m": [m for m, _ in trace], "log2_weight": [log2(w) for _, w in trace]})

        certificates, rows = [], []
        for threshold in self.config.thresholds:
            cert = packing.divergence_certificate(model, self.g, threshold, delta)
            verification = packing.verify_packing(cert.packing, model)
            certificates.append(certificate_payload(cert, self.record.config_hash, verification))
            if len(cert.packing) <= PACKING_EXPORT_LIMIT:
                for row in packing_rows(cert.packing, self.g):
                    rows.append({"threshold": cert.threshold, **row})
            self._flag(f"certified_M={decimal_str(cert.threshold)}", cert.verified and verification.passed)
            self._value(f"level_M={decimal_str(cert.threshold)}", cert.level)
            self._value(f"witness_sample_M={decimal_str(cert.threshold)}", verification.witness_sample)
        self._json("certificate.json", certificates)
        if rows:
            self._csv("packing.csv", rows)

    def _lemma6(self) -> None:
        model = self._model()
        delta = to_fraction(self.config.delta)
        merged = packing.lemma6_extract(model, self.g, self.config.stages, delta)
        verification = packing.verify_packing(merged, model)
        self._csv("packing.csv", packing_rows(merged, self.g))
        self._json("report.json", {
            "inputs_hash": self.record.config_hash,
            "bound_kind": "LOWER",
            "ball_count": len(merged),
            "stages": merged.meta["stages"],
            "weight": merged.meta["weight"],
            "target": merged.meta["target"],
            "verification": verification.model_dump(mode="json"),
        })
        self._flag("disjoint", verification.disjoint)
        self._flag("within_delta", verification.within_delta)
        self._flag("witnessed", verification.witnessed is True)
        self._flag("reaches_target", merged.meta["reaches_target"])
        self._value("weight", merged.meta["weight"])
        self._value("witness_sample", verification.witness_sample)

    def _construct_f(self) -> None:
        config = self.config
        deltas = DeltaSequence(values=config.deltas)
        report = constructions.validate_delta_sequence(self.h, deltas, config.instance, raise_on_failure=False)
        if not report.valid:
            logger.warning(f"delta sequence fails at n={report.first_failure} ({report.reason}); searching a shift")
            deltas, report = constructions.shift_delta_sequence(self.h, deltas, config.instance)
        instance = config.instance
        if report.shift and not isinstance(instance, FinitePointSet):
            instance = constructions.shift_instance(instance, report.shift)
        self._csv("delta.csv", [
            {
                "n": r.n,
                "delta": r.delta,
                "h_delta": r.h_delta,
                "premeasure_bound": r.premeasure_bound,
                "target": r.target,
                "pass": r.passed,
            }
            for r in report.rows
        ])
        f, creport = constructions.construct_f_theorem4a(self.h, deltas, instance)
        self._checks(creport)
        self._value("shift", report.shift)

        if isinstance(instance, FinitePointSet) and config.packings:
            band_rows = []
            packings = constructions.random_point_packings(
                instance.points, deltas.values[0], config.packings, config.seed,
            )
            for i, p in enumerate(packings):
                sums = constructions.band_sums(f, self.h, deltas, p)
                band_rows.append({
                    "packing": i,
                    "balls": len(p),
                    "weighted_h_sum": sums.weighted_h_sum,
                    "f_sum": sums.f_sum,
                    "pass": sums.passed,
                })
            self._csv("bands.csv", band_rows)
            self._flag("band_sums_ok", all(r["pass"] for r in band_rows))
        self._json("f.json", dimfunc.spec_payload(f))
        self._json("report.json", {"shift": report.shift, **creport.model_dump(mode="json")})

    def _construct_g(self) -> None:
        tseq, g, report = constructions.construct_g_theorem4b(self.h, self.config.stream, self.config.J)
        rows = [{"j": 0, "N_j": "", "t_j": tseq.t[0], "prefix_min": "", "h_sum": "", "g_sum": ""}]
        for j in range(1, tseq.stages + 1):
            rows.append({
                "j": j,
                "N_j": tseq.N[j - 1],
                "t_j": tseq.t[j],
                "prefix_min": tseq.prefix_min[j - 1],
                "h_sum": tseq.h_prefix_sums[j - 1],
                "g_sum": tseq.g_prefix_sums[j - 1],
            })
        self._csv("tsequence.csv", rows)
        self._json("g.json", dimfunc.spec_payload(g))
        self._json("report.json", report.model_dump(mode="json"))
        self._checks(report)
        self._value("N", tseq.N)

    def _construct_ginterp(self) -> None:
        g, report = constructions.construct_g_interp(self.h, self.config.scales, self.config.tail_ratio)
        self._csv("breakpoints.csv", [
            {"t": t, "below": below, "above": above}
            for t, below, above in g.breakpoint_values()
        ])
        self._json("g.json", dimfunc.spec_payload(g))
        self._json("report.json", report.model_dump(mode="json"))
        self._checks(report)

    def _order(self) -> None:
        config = self.config
        grid = dimfunc.default_grid(config.grid_depth)
        result = dimfunc.compare_order(self.g, self.h, grid)
        rows = [
            {"t": t, "h_over_g": ratio, "log2_t": log2(t), "log2_ratio": log2(ratio)}
            for t, ratio in result.ratio_trace
        ]
        self._csv("trace.csv", rows)
        payload = {
            "verdict": result.verdict.value,
            "low_count": result.low_count,
            "high_count": result.high_count,
            "grid_depth": config.grid_depth,
        }
        self._flag("order_classified", result.verdict != OrderVerdict.INCONCLUSIVE)
        self._value("verdict", result.verdict.value)
        if config.membership_d is not None:
            for label, f in (("h", self.h), ("g", self.g)):
                doubling = dimfunc.check_membership_Dd(f, config.membership_d, grid)
                payload[f"membership_{label}"] = doubling.model_dump(mode="json", exclude={"grid"})
                self._flag(f"{label}_in_D{config.membership_d}", doubling.bounded)
        self._json("report.json", payload)
        self._series("order", {"log2_t": [r["log2_t"] for r in rows], "log2_ratio": [r["log2_ratio"] for r in rows]})

    def _optimize(self) -> None:
        config = self.config
        radii = [to_fraction(r) for r in config.radii]
        delta = to_fraction(config.delta)
        n_centers = max(1, config.candidates // len(radii))
        children = np.random.SeedSequence(config.seed).spawn(config.trials)
        tasks = [(i, child, n_centers, radii, self.g, delta) for i, child in enumerate(children)]
        rows = parallel_map(_optimize_trial, tasks, workers=config.workers, desc="optimize")
        self._csv("optimize.csv", rows)
        self._flag("oracle_equivalence", all(r["equal"] for r in rows))
        self._flag("greedy_dominated", all(r["dominated"] for r in rows))
        self._flag("verified", all(r["verified"] for r in rows))
        self._series("optimize", {
            "trial": [r["trial"] for r in rows],
            "dp_weight": [r["dp_weight"] for r in rows],
            "greedy_weight": [r["greedy_weight"] for r in rows],
        })
