"""Signal preprocessing and window extraction.

Temperature channels are smoothed with a trailing 1-minute moving average,
then converted to a rate of change over a 5-minute span (the model consumes
the rate series, not raw temperature).  Vibration arrives as 1 Hz RMS; an
``rms_resample`` operator is provided for higher-rate inputs.  Aligned
channels are sliced into fixed-length windows whose target is the load at
the window's final second.
"""

from __future__ import annotations

import json
import os
import warnings

import numpy as np

from .graph import SensorNode, _canonical_sorted, default_layout
from .simulate import case_filename, read_case_csv, read_manifest_csv

MA_WINDOW_S = 60
RATE_SPAN_S = 300
WINDOW_S = 30


def moving_average(x: np.ndarray, window: int = MA_WINDOW_S) -> np.ndarray:
    """Trailing mean over up to ``window`` samples (shorter at the start).

    Output has the same length as the input: out[t] = mean(x[max(0, t-window+1) : t+1]).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("moving_average expects a nonempty 1-D series")
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    csum = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(x.size)
    lo = np.maximum(t - window + 1, 0)
    return (csum[t + 1] - csum[lo]) / (t + 1 - lo)


def temperature_rate(x: np.ndarray, span: int = RATE_SPAN_S) -> np.ndarray:
    """Rate of change over a fixed span: r[t] = (x[t] - x[t-span]) / span.

    The first ``span`` samples have no lookback and are dropped, so the
    output length is len(x) - span.  Units: degC/s for 1 Hz input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("temperature_rate expects a 1-D series")
    if span < 1:
        raise ValueError(f"span must be positive, got {span}")
    if x.size <= span:
        raise ValueError(f"series length {x.size} must exceed span {span}")
    return (x[span:] - x[:-span]) / span


def rms_resample(hf: np.ndarray, group: int) -> np.ndarray:
    """Downsample to 1 Hz by root-mean-square over ``group`` samples.

    A tail shorter than ``group`` is truncated.
    """
    hf = np.asarray(hf, dtype=np.float64)
    if hf.ndim != 1:
        raise ValueError("rms_resample expects a 1-D series")
    if group < 1:
        raise ValueError(f"group must be positive, got {group}")
    n = (hf.size // group) * group
    blocks = hf[:n].reshape(-1, group)
    return np.sqrt(np.mean(blocks * blocks, axis=1))


def window_slice(x_t: np.ndarray, x_v: np.ndarray, w: np.ndarray,
                 y: np.ndarray, length: int = WINDOW_S, stride: int = 1):
    """Slice aligned channels into windows.

    ``x_t``: (N_T, D); ``x_v``: (N_V, D); ``w``: (D,); ``y``: (2, D)
    per-second targets.  Yields (X_T, X_V, w, y) per window where the target
    is taken at the window's final second.  A recording shorter than
    ``length`` yields zero windows with a warning.
    """
    d = w.shape[0]
    if x_t.shape[1] != d or x_v.shape[1] != d or y.shape[1] != d:
        raise ValueError("channels are not aligned to a common duration")
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be positive")
    if d < length:
        warnings.warn(
            f"recording of {d} samples is shorter than window {length}; "
            f"no windows produced"
        )
        return
    for start in range(0, d - length + 1, stride):
        end = start + length
        yield (x_t[:, start:end], x_v[:, start:end], w[start:end],
               y[:, end - 1])


def process_case(channels: dict[str, np.ndarray], temp_ids: list[str],
                 vib_ids: list[str], ma_window: int = MA_WINDOW_S,
                 rate_span: int = RATE_SPAN_S, rms_group: int = 1):
    """Run the per-case pipeline; returns aligned (X_T, X_V, w, y).

    Temperature: moving average then rate (the first ``rate_span`` seconds
    drop out); vibration and speed are truncated to the same tail so all
    channels stay aligned.
    """
    temps = np.stack([channels[i] for i in temp_ids])
    vibs = np.stack([channels[i] for i in vib_ids])
    if rms_group > 1:
        vibs = np.stack([rms_resample(v, rms_group) for v in vibs])
    speed = channels["speed"]
    x_t = np.stack([temperature_rate(moving_average(t, ma_window), rate_span)
                    for t in temps])
    d = x_t.shape[1]
    y = np.stack([channels["F_x"], channels["F_y"]])
    return x_t, vibs[:, -d:], speed[-d:], y[:, -d:]


class WindowStore:
    """In-memory window dataset with npz persistence."""

    def __init__(self, x_t, x_v, w, y, case_ids, meta: dict):
        self.x_t = x_t
        self.x_v = x_v
        self.w = w
        self.y = y
        self.case_ids = case_ids
        self.meta = meta

    def __len__(self):
        return self.x_t.shape[0]

    def save(self, path):
        np.savez(path, x_t=self.x_t, x_v=self.x_v, w=self.w, y=self.y,
                 case_ids=self.case_ids,
                 __meta__=np.array(json.dumps(self.meta, sort_keys=True)))

    @classmethod
    def load(cls, path) -> "WindowStore":
        with np.load(path, allow_pickle=False) as z:
            return cls(z["x_t"], z["x_v"], z["w"], z["y"], z["case_ids"],
                       json.loads(str(z["__meta__"])))


def build_window_store(data_dir, window: int = WINDOW_S, stride: int = 1,
                       ma_window: int = MA_WINDOW_S,
                       rate_span: int = RATE_SPAN_S, rms_group: int = 1,
                       layout: list[SensorNode] | None = None) -> WindowStore:
    """Read a simulated dataset directory into a WindowStore."""
    layout = default_layout() if layout is None else layout
    temp_ids = [n.node_id for n in
                _canonical_sorted([n for n in layout if n.meta == "T"])]
    vib_ids = [n.node_id for n in
               _canonical_sorted([n for n in layout if n.meta == "V"])]
    manifest = read_manifest_csv(os.path.join(data_dir, "manifest.csv"))
    xts, xvs, ws, ys, cids = [], [], [], [], []
    for row in manifest:
        channels, _, _ = read_case_csv(
            os.path.join(data_dir, case_filename(row["case_id"])))
        x_t, x_v, w, y = process_case(channels, temp_ids, vib_ids,
                                      ma_window, rate_span, rms_group)
        for wt, wv, ww, wy in window_slice(x_t, x_v, w, y, window, stride):
            xts.append(wt)
            xvs.append(wv)
            ws.append(ww)
            ys.append(wy)
            cids.append(row["case_id"])
    if not xts:
        raise ValueError(f"no windows produced from {data_dir}")
    meta = {
        "window": window, "stride": stride, "ma_window": ma_window,
        "rate_span": rate_span, "rms_group": rms_group,
        "temp_ids": temp_ids, "vib_ids": vib_ids,
        "manifest": manifest,
    }
    return WindowStore(np.stack(xts), np.stack(xvs), np.stack(ws),
                       np.stack(ys), np.array(cids, dtype=np.int64), meta)
