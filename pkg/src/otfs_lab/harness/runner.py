"""Monte Carlo runner: deterministic scheduling, optional process pool,
early stopping on error-event targets, and CSV/JSON emission.

Reproducibility contract: every random draw derives from
``SeedSequence([master_seed, trial_index])``, trials are evaluated in fixed
batches whose composition never depends on the worker count, and counters
are aggregated in trial order.  Emitted files are therefore a pure function
of (config, seed); wall times go to the log, and the ``seconds`` column is
kept at zero so artifacts stay bit-reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from otfs_lab.harness.config import ConfigError, ExperimentConfig
from otfs_lab.harness import experiments as bodies

logger = logging.getLogger(__name__)

Z95 = 1.959963984540054


@dataclass(frozen=True)
class ResultRow:
    sweep: float
    metric: str
    value: float
    ci95: float
    trials: int
    events: int
    seconds: float = 0.0


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def by_metric(self, metric: str) -> dict[float, ResultRow]:
        return {r.sweep: r for r in self.rows if r.metric == metric}


def wilson_halfwidth(events: int, total: int) -> float:
    """95% Wilson score interval half-width for a binomial rate."""
    if total == 0:
        return 1.0
    p = events / total
    z2 = Z95**2
    return float(
        Z95 / (1.0 + z2 / total) * np.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total**2))
    )


def _run_batch(body, config, snr, trial_indices, pool):
    if pool is None:
        return [body(config, snr, t) for t in trial_indices]
    futures = [pool.submit(body, config, snr, t) for t in trial_indices]
    return [f.result() for f in futures]


def _rate_experiment(
    config: ExperimentConfig, metric: str, body, pool
) -> list[ResultRow]:
    rows = []
    for snr in config.snr_db:
        t0 = time.monotonic()
        errors = 0
        total = 0
        done = 0
        while done < config.trials:
            batch = list(range(done, min(done + config.batch, config.trials)))
            outcomes = _run_batch(body, config, snr, batch, pool)
            for out in outcomes:
                errors += out.errors
                total += out.total
            done = batch[-1] + 1
            if config.target_errors and errors >= config.target_errors:
                break
        logger.info(
            "%s sweep=%s: %d/%d events in %.1fs",
            metric,
            snr,
            errors,
            total,
            time.monotonic() - t0,
        )
        rows.append(
            ResultRow(
                sweep=float(snr),
                metric=metric,
                value=errors / total if total else 0.0,
                ci95=wilson_halfwidth(errors, total),
                trials=done,
                events=errors,
            )
        )
    return rows


def _mse_trace_rows(config: ExperimentConfig) -> list[ResultRow]:
    from otfs_lab import modem
    from otfs_lab.channel import td_effective_channel
    from otfs_lab.detect import TdLmmseSolver, cross_domain_detect, state_evolution
    from otfs_lab.transforms import unvec

    frame = bodies.frame_params(config)
    const = modem.constellation(config.constellation)
    rows = []
    for snr in config.snr_db:
        n0 = modem.n0_from_esn0_db(snr)
        rng = bodies.trial_rng(config.seed, 0)
        paths = bodies.draw_channel(config, frame, rng)
        h_td = td_effective_channel(paths).matrix
        solver = TdLmmseSolver(h_td, n0)
        iters = config.detector.iterations
        mse_acc = np.zeros(iters)
        for trial in range(config.trials):
            rng_t = bodies.trial_rng(config.seed, trial + 1)
            x = const.random_symbols(frame.mn, rng_t)
            _, r_td = modem.transmit(unvec(x, frame), paths, n0, rng_t)
            det = cross_domain_detect(
                r_td.data, solver, const, n0, iters, frame=frame, true_symbols=x
            )
            mse_acc += np.array(det.per_iteration_mse)
        mse_acc /= config.trials
        trace = state_evolution(solver.eigenvalues, const, n0, iters)
        for i in range(iters):
            rows.append(ResultRow(snr, f"mse_sim_iter{i + 1}", float(mse_acc[i]), 0.0, config.trials, 0))
            rows.append(ResultRow(snr, f"mse_pred_iter{i + 1}", float(trace.v_td[i + 1]), 0.0, 0, 0))
    return rows


def _state_evolution_rows(config: ExperimentConfig) -> list[ResultRow]:
    from otfs_lab import modem
    from otfs_lab.channel import td_effective_channel
    from otfs_lab.detect import state_evolution

    frame = bodies.frame_params(config)
    const = modem.constellation(config.constellation)
    rows = []
    for snr in config.snr_db:
        n0 = modem.n0_from_esn0_db(snr)
        rng = bodies.trial_rng(config.seed, 0)
        paths = bodies.draw_channel(config, frame, rng)
        trace = state_evolution(
            td_effective_channel(paths).matrix, const, n0, config.detector.iterations
        )
        for i, (v_td, v_dd, eta) in enumerate(
            zip(trace.v_td[1:], trace.v_dd, trace.eta_dd), start=1
        ):
            rows.append(ResultRow(snr, f"v_td_iter{i}", v_td, 0.0, 0, 0))
            rows.append(ResultRow(snr, f"v_dd_iter{i}", v_dd, 0.0, 0, 0))
            rows.append(ResultRow(snr, f"eta_dd_iter{i}", eta, 0.0, 0, 0))
    return rows


def _coding_gain_rows(config: ExperimentConfig) -> list[ResultRow]:
    from otfs_lab.analysis import average_coding_gain

    frame = bodies.frame_params(config)
    rng = bodies.trial_rng(config.seed, 0)
    rows = []
    for weight in config.error_weights:
        e = np.zeros(frame.mn, dtype=complex)
        e[: int(weight)] = 2.0
        gain = average_coding_gain(
            e,
            frame,
            config.channel.p,
            config.channel.l_max,
            int(config.channel.k_max),
            config.trials,
            rng,
        )
        rows.append(
            ResultRow(float(4 * weight), "avg_coding_gain_db", gain, 0.0, config.trials, 0)
        )
    return rows


def _isac_fer_rows(config: ExperimentConfig, pool) -> list[ResultRow]:
    return _rate_experiment(config, "fer", bodies.isac_fer_trial, pool)


def run(config: ExperimentConfig) -> ResultTable:
    """Execute one experiment; returns the result table with the resolved
    configuration attached."""
    config.validate()
    table = ResultTable(config=config.to_dict())
    pool = None
    try:
        if config.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=config.jobs)
        if config.experiment == "ber":
            table.rows = _rate_experiment(config, "ber", bodies.ber_trial, pool)
        elif config.experiment == "fer_coded":
            table.rows = _rate_experiment(config, "fer", bodies.fer_coded_trial, pool)
        elif config.experiment == "isac_sensing":
            table.rows = _rate_experiment(
                config, "miss_detection", bodies.isac_sensing_trial, pool
            )
        elif config.experiment == "isac_fer":
            table.rows = _isac_fer_rows(config, pool)
        elif config.experiment == "mse_trace":
            table.rows = _mse_trace_rows(config)
        elif config.experiment == "state_evolution":
            table.rows = _state_evolution_rows(config)
        elif config.experiment == "coding_gain":
            table.rows = _coding_gain_rows(config)
        else:
            raise ConfigError(f"experiment: unhandled kind {config.experiment!r}")
    finally:
        if pool is not None:
            pool.shutdown()
    return table


COLUMNS = ("sweep", "metric", "value", "ci95", "trials", "events", "seconds")


def emit(table: ResultTable, path: str | Path | None, fmt: str = "csv") -> str:
    """Serialize a result table (stable column order, config embedded).

    Returns the text; writes it to ``path`` when given.
    """
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(table.config, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in table.rows:
            writer.writerow(
                [
                    repr(row.sweep),
                    row.metric,
                    repr(row.value),
                    repr(row.ci95),
                    row.trials,
                    row.events,
                    repr(row.seconds),
                ]
            )
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(
            {"config": table.config, "rows": [asdict(r) for r in table.rows]},
            sort_keys=True,
            indent=1,
        )
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_csv(text: str) -> ResultTable:
    """Round-trip reader for :func:`emit`'s CSV output."""
    lines = text.splitlines()
    config = {}
    if lines and lines[0].startswith("# config: "):
        config = json.loads(lines[0][len("# config: "):])
        lines = lines[1:]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    rows = [
        ResultRow(
            float(rec["sweep"]),
            rec["metric"],
            float(rec["value"]),
            float(rec["ci95"]),
            int(rec["trials"]),
            int(rec["events"]),
            float(rec["seconds"]),
        )
        for rec in reader
    ]
    return ResultTable(rows=rows, config=config)


def parse_json(text: str) -> ResultTable:
    record = json.loads(text)
    rows = [ResultRow(**r) for r in record["rows"]]
    return ResultTable(rows=rows, config=record["config"])
