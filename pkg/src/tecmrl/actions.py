"""Heparin dose binning into the five discrete actions (U/kg/h)."""
import math

import numpy as np

N_ACTIONS = 5
# right-closed upper edges of bins a1..a3; a0 is exactly zero, a4 is open-ended
DOSE_EDGES = (1.38, 1.88, 3.5)


def bin_action(dose: float) -> int:
    """Map a dose to its action index 0..4; bins are right-closed."""
    dose = float(dose)
    if math.isnan(dose) or dose < 0:
        raise ValueError(f"dose must be a non-negative number, got {dose}")
    if dose == 0:
        return 0
    for i, edge in enumerate(DOSE_EDGES):
        if dose <= edge:
            return i + 1
    return 4


def bin_actions(doses) -> np.ndarray:
    doses = np.asarray(doses, dtype=np.float64)
    if np.any(np.isnan(doses)) or np.any(doses < 0):
        raise ValueError("doses must be non-negative numbers")
    out = np.searchsorted(np.array(DOSE_EDGES), doses, side="left") + 1
    out[doses == 0] = 0
    return out.astype(np.int64)
