"""Error/accuracy measures and cross-run aggregation."""

import numpy as np

DB_FLOOR = -3000.0
_TINY = 1e-300


def mse_db(mse):
    """``10*log10(mse)``; values below 1e-300 map to the -3000 dB sentinel."""
    mse = np.asarray(mse, dtype=float)
    if np.any(mse < 0):
        raise ValueError("MSE must be nonnegative")
    out = np.full(mse.shape, DB_FLOOR)
    ok = mse >= _TINY
    out[ok] = 10.0 * np.log10(mse[ok])
    return float(out) if out.ndim == 0 else out


def classification_accuracy(prediction, label):
    """1 where ``prediction >= 0.5`` agrees with ``label == 1``, else 0."""
    prediction = np.asarray(prediction, dtype=float)
    label = np.asarray(label)
    return ((prediction >= 0.5) == (label == 1)).astype(float)


def steady_state(trace, window=None):
    """Mean and standard deviation over the last ``window`` slots (default: last 10%)."""
    trace = np.asarray(trace, dtype=float)
    if window is None:
        window = max(1, trace.size // 10)
    if not 1 <= window <= trace.size:
        raise ValueError(f"window {window} does not fit a trace of length {trace.size}")
    tail = trace[-window:]
    return float(tail.mean()), float(tail.std())


def aggregate_runs(per_run):
    """Per-slot mean and std over runs of the agent-averaged value.

    ``per_run`` has shape ``(R, N, T)``. The mean is the flat mean over
    agents and runs; the std is taken across runs of each run's
    agent average.
    """
    per_run = np.asarray(per_run, dtype=float)
    agent_mean = per_run.mean(axis=1)
    return agent_mean.mean(axis=0), agent_mean.std(axis=0)
