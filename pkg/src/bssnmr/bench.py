"""Benchmark orchestration: experiment grid, aggregation, runtimes.

A plan spans models x noise levels x component-count modes x normalizations
x techniques x k offsets.  Datasets are derived deterministically from the
master seed and reused byte-identically across techniques and k offsets;
technique failures are counted and excluded from error statistics.  All
aggregation is a sorted reduction, so results are independent of worker
count and completion order.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .bss import decompose, technique_names
from .errors import TechniqueFailure
from .numkernel import derive_rng
from .scoring import best_assignment
from .synth import (MAX_COMPONENTS, MIN_COMPONENTS, NOISE_LEVELS,
                    assemble_dataset, normalize, sample_components)

COMPONENT_COUNT_MODES = ("fixed4", "fixed6", "random2to10")

# Stream tags keeping dataset randomness separate from technique seeding.
_DATASET_STREAM = 1
_TECHNIQUE_STREAM = 2


@dataclass(frozen=True)
class BenchmarkPlan:
    master_seed: int = 0
    n_datasets_per_cell: int = 20
    models: tuple = ("inversion", "nutation")
    noise_levels: tuple = NOISE_LEVELS
    component_count_modes: tuple = ("fixed4", "fixed6", "random2to10")
    normalizations: tuple = ("none", "peak", "area")
    techniques: tuple = ()
    k_offsets: tuple = (-2, -1, 0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.n_datasets_per_cell < 1:
            raise ValueError("n_datasets_per_cell must be at least 1")
        if 0 not in self.k_offsets:
            raise ValueError("k_offsets must contain 0")
        for mode in self.component_count_modes:
            if mode not in COMPONENT_COUNT_MODES:
                raise ValueError(f"unknown component count mode {mode!r}")
        if not self.techniques:
            object.__setattr__(self, "techniques", technique_names())

    def dataset_keys(self):
        for mi, model in enumerate(self.models):
            for ni, noise in enumerate(self.noise_levels):
                for ci, mode in enumerate(self.component_count_modes):
                    for di in range(self.n_datasets_per_cell):
                        yield (mi, model, ni, float(noise), ci, mode, di)


@dataclass(frozen=True)
class CellKey:
    model: str
    noise: float
    mode: str
    normalization: str
    technique: str
    k_offset: int


@dataclass
class CellResult:
    key: CellKey
    errors: list = field(default_factory=list)    # failed runs excluded
    failures: int = 0
    runtimes: list = field(default_factory=list)


@dataclass
class AggregateTable:
    columns: list
    rows: list

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def technique_family(name: str) -> str:
    return name.split(":", 1)[0]


def build_dataset(plan: BenchmarkPlan, library, dataset_key):
    """Deterministic dataset for one (model, noise, mode, index) cell slot."""
    mi, model, ni, noise, ci, mode, di = dataset_key
    rng = derive_rng(plan.master_seed, _DATASET_STREAM, mi, ni, ci, di)
    if mode == "fixed4":
        true_k = 4
    elif mode == "fixed6":
        true_k = 6
    else:
        true_k = int(rng.integers(MIN_COMPONENTS, MAX_COMPONENTS + 1))
    pures = sample_components(library, true_k, rng)
    dataset = assemble_dataset(pures, model, rng, noise_factor=noise)
    return dataset, pures, true_k


def _technique_seed(plan: BenchmarkPlan, dataset_key, tech_index: int,
                    offset_index: int) -> int:
    mi, ni, ci, di = dataset_key[0], dataset_key[2], dataset_key[4], dataset_key[6]
    seq = np.random.SeedSequence([plan.master_seed, _TECHNIQUE_STREAM,
                                  mi, ni, ci, di, tech_index, offset_index])
    return int(seq.generate_state(1)[0])


def run_dataset(plan: BenchmarkPlan, library, dataset_key) -> list:
    """All decomposition records for one dataset across the plan grid."""
    _, model, _, noise, _, mode, di = dataset_key
    dataset, pures, true_k = build_dataset(plan, library, dataset_key)
    records = []
    for norm in plan.normalizations:
        normalized = normalize(dataset, norm)
        for ti, technique in enumerate(plan.techniques):
            for oi, k_offset in enumerate(plan.k_offsets):
                k = max(1, true_k + k_offset)
                record = {
                    "model": model, "noise": noise, "mode": mode,
                    "dataset": di, "normalization": norm,
                    "technique": technique, "k_offset": int(k_offset),
                    "true_k": true_k, "k_used": k,
                    "clamped": k != true_k + k_offset,
                }
                seed = _technique_seed(plan, dataset_key, ti, oi)
                try:
                    result = decompose(normalized, technique, k, seed=seed)
                    report = best_assignment(result, pures)
                    record.update(failed=False, error=report.dataset_error,
                                  converged=result.converged,
                                  runtime=result.runtime_seconds)
                except TechniqueFailure as exc:
                    record.update(failed=True, error=None, converged=False,
                                  runtime=0.0, failure=str(exc))
                records.append(record)
    return records


_FORK_CONTEXT: dict = {}


def _fork_worker(dataset_key):
    return run_dataset(_FORK_CONTEXT["plan"], _FORK_CONTEXT["library"], dataset_key)


def record_key(record: dict) -> tuple:
    return (record["model"], record["noise"], record["mode"], record["dataset"],
            record["normalization"], record["technique"], record["k_offset"])


def run_plan(plan: BenchmarkPlan, library, workers: int = 1,
             existing_records=None, record_sink=None):
    """Execute the plan; returns (cell results, all records).

    ``existing_records`` (from a previous interrupted run) are trusted for
    any dataset whose records are complete; incomplete datasets are rerun.
    ``record_sink`` receives each fresh record as it is produced.
    """
    if not library:
        raise ValueError("run_plan needs a nonempty component library")
    per_dataset = (len(plan.normalizations) * len(plan.techniques)
                   * len(plan.k_offsets))
    done: dict = {}
    datasets_done: dict = {}
    for record in existing_records or []:
        done[record_key(record)] = record
        dkey = record_key(record)[:4]
        datasets_done[dkey] = datasets_done.get(dkey, 0) + 1

    pending = []
    for dataset_key in plan.dataset_keys():
        _, model, _, noise, _, mode, di = dataset_key
        if datasets_done.get((model, noise, mode, di), 0) < per_dataset:
            pending.append(dataset_key)

    fresh = []
    if workers <= 1 or not pending:
        for dataset_key in pending:
            fresh.extend(run_dataset(plan, library, dataset_key))
    else:
        _FORK_CONTEXT["plan"] = plan
        _FORK_CONTEXT["library"] = library
        try:
            with ProcessPoolExecutor(max_workers=workers,
                                     mp_context=get_context("fork")) as pool:
                for batch in pool.map(_fork_worker, pending):
                    fresh.extend(batch)
        finally:
            _FORK_CONTEXT.clear()

    for record in fresh:
        done[record_key(record)] = record
        if record_sink is not None:
            record_sink(record)

    records = [done[key] for key in sorted(done.keys(), key=_sort_key)]
    return collect_cells(records), records


def _sort_key(key: tuple) -> tuple:
    model, noise, mode, dataset, norm, technique, k_offset = key
    return (model, noise, mode, dataset, norm, technique, k_offset)


def collect_cells(records) -> list:
    """Group records into per-cell results, failures excluded from errors."""
    cells: dict = {}
    for record in records:
        key = CellKey(model=record["model"], noise=record["noise"],
                      mode=record["mode"], normalization=record["normalization"],
                      technique=record["technique"], k_offset=record["k_offset"])
        cell = cells.setdefault(key, CellResult(key=key))
        if record["failed"]:
            cell.failures += 1
        else:
            cell.errors.append(record["error"])
            cell.runtimes.append(record["runtime"])
    return [cells[key] for key in sorted(cells, key=lambda c: (
        c.model, c.noise, c.mode, c.normalization, c.technique, c.k_offset))]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def runtime_factor(runtimes) -> int:
    """Integer magnitude of the most frequent runtime decade."""
    runtimes = [max(float(t), 1e-9) for t in runtimes]
    if not runtimes:
        raise ValueError("runtime_factor needs at least one runtime")
    buckets = sorted(math.floor(math.log10(t)) for t in runtimes)
    counts: dict = {}
    for b in buckets:
        counts[b] = counts.get(b, 0) + 1
    best = max(counts.values())
    return min(b for b, c in counts.items() if c == best)


def aggregate_table1(records) -> AggregateTable:
    """Mean (min, max) dataset error per technique x normalization, exact k."""
    groups: dict = {}
    for record in records:
        if record["k_offset"] != 0 or record["failed"]:
            continue
        groups.setdefault((record["technique"], record["normalization"]),
                          []).append(record["error"])
    if not groups:
        raise ValueError("no successful exact-k records to aggregate")
    rows = []
    for (technique, norm) in sorted(groups):
        errors = groups[(technique, norm)]
        rows.append((technique, norm, float(np.mean(errors)),
                     float(np.min(errors)), float(np.max(errors)), len(errors)))
    return AggregateTable(
        columns=["technique", "normalization", "mean_error", "min_error",
                 "max_error", "n_datasets"],
        rows=rows)


def aggregate_runtimes(records) -> AggregateTable:
    """Runtime factor per technique (reported separately: wall-clock data)."""
    groups: dict = {}
    for record in records:
        if record["failed"]:
            continue
        groups.setdefault(record["technique"], []).append(record["runtime"])
    rows = [(tech, runtime_factor(groups[tech])) for tech in sorted(groups)]
    return AggregateTable(columns=["technique", "runtime_factor"], rows=rows)


def aggregate_table2(records) -> AggregateTable:
    """Error ratio vs exact-k per technique family and positive k offset."""
    offsets = sorted({r["k_offset"] for r in records if r["k_offset"] > 0})
    groups: dict = {}
    for record in records:
        if record["failed"] or record["k_offset"] < 0:
            continue
        groups.setdefault((technique_family(record["technique"]),
                           record["k_offset"]), []).append(record["error"])
    families = sorted({fam for fam, _ in groups})
    rows = []
    for family in families:
        base = groups.get((family, 0))
        if not base:
            continue
        base_mean = float(np.mean(base))
        row = [family, 1.0]
        for offset in offsets:
            plus = groups.get((family, offset))
            if plus and base_mean > 0:
                row.append(float(np.mean(plus)) / base_mean)
            else:
                row.append("")
        rows.append(tuple(row))
    return AggregateTable(
        columns=["family", "exact"] + [f"plus_{o}" for o in offsets],
        rows=rows)


def aggregate_table3(records) -> AggregateTable:
    """Mean error per technique family at each noise level (raw data only)."""
    noises = sorted({r["noise"] for r in records})
    groups: dict = {}
    for record in records:
        if (record["failed"] or record["k_offset"] != 0
                or record["normalization"] != "none"):
            continue
        groups.setdefault((technique_family(record["technique"]),
                           record["noise"]), []).append(record["error"])
    families = sorted({fam for fam, _ in groups})
    rows = []
    for family in families:
        row = [family]
        for noise in noises:
            errors = groups.get((family, noise))
            row.append(float(np.mean(errors)) if errors else "")
        rows.append(tuple(row))
    return AggregateTable(
        columns=["family"] + [f"noise_{n:g}" for n in noises],
        rows=rows)
