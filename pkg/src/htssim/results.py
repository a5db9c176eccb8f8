"""Result tables, atomic file output and the trial runner."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
import csv
import io
import os
import tempfile

from . import __version__
from .experiments import REGISTRY, Experiment

WORKERS_ENV = "HTSSIM_WORKERS"


@dataclass(frozen=True)
class ResultTable:
    columns: tuple  # (name, unit)
    rows: tuple
    metadata: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {v}\n")
        buf.write("# units: " + ", ".join(f"{n}={u}" for n, u in self.columns) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([n for n, _ in self.columns])
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def read_csv(path):
    """Parse a result file back into ``(metadata, header, rows)`` (values stay strings)."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        else:
            lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def write_atomic(path, data):
    """Write bytes via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _run_trial(name, scenario, trial):
    return REGISTRY[Experiment(name)].trial(scenario, trial)


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(scenario, experiment, trials=None, seed=None, workers=None):
    """Evaluate every trial and return the assembled :class:`ResultTable`.

    Rows are ordered by trial index whatever the worker count.
    """
    experiment = Experiment(experiment)
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    if trials is not None:
        scenario = replace(scenario, monte_carlo_trials=int(trials))
    n = scenario.monte_carlo_trials
    workers = worker_count() if workers is None else max(1, int(workers))
    exp_def = REGISTRY[experiment]
    if workers == 1 or n == 1:
        per_trial = [exp_def.trial(scenario, t) for t in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_run_trial, [experiment.value] * n, [scenario] * n, range(n)))
    rows = tuple(r for trial_rows in per_trial for r in trial_rows)
    meta = {
        "htssim result table": experiment.value,
        "scenario_sha256": scenario.source_digest,
        "seed": scenario.seed,
        "trials": n,
        "artifact_version": __version__,
    }
    return ResultTable(exp_def.columns, rows, meta), scenario


def run_to_dir(scenario, experiment, out_dir, trials=None, seed=None, workers=None):
    """Run an experiment and write ``<out_dir>/<Experiment>.csv`` plus any side files."""
    table, scenario = run_experiment(scenario, experiment, trials, seed, workers)
    out_dir = Path(out_dir)
    exp_def = REGISTRY[Experiment(experiment)]
    extra = exp_def.artifacts(scenario) if exp_def.artifacts else {}
    written = [write_atomic(out_dir / f"{Experiment(experiment).value}.csv", table.to_csv().encode())]
    for name, data in extra.items():
        written.append(write_atomic(out_dir / name, data))
    return table, written
