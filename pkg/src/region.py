# src/region.py
"""
Classification of the (gamma, lambda) plane into supercritical, subcritical
and infeasible cells.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from . import config
from .closed_forms import BifurcationClass, ModelParams, classify, o_total, solve_critical_pair
from .errors import InfeasibleParametersError, ParameterDomainError
from .storage import save_csv

logger = logging.getLogger(__name__)

CSV_HEADER = ["gamma", "lambda", "feasible", "alpha_c", "p0sq", "o_total", "class"]


@dataclass(frozen=True)
class RegionCell:
    gamma: float
    lam: float
    feasible: bool
    alpha_c: Optional[float] = None
    p0sq: Optional[float] = None
    o_total: Optional[float] = None
    cls: Optional[BifurcationClass] = None

    def row(self) -> List[Any]:
        if not self.feasible:
            return [self.gamma, self.lam, False, "", "", "", ""]
        return [self.gamma, self.lam, True, self.alpha_c, self.p0sq, self.o_total, self.cls.value]


def evaluate_cell(gamma: float, lam: float, tol: Optional[float] = None) -> RegionCell:
    try:
        a_c, P = solve_critical_pair(gamma, lam)
    except InfeasibleParametersError:
        return RegionCell(gamma, lam, False)
    params = ModelParams(gamma, P)
    if P == 0.0:
        # bifurcation coefficient undefined on the p0 = 0 edge
        return RegionCell(gamma, lam, True, a_c, P, 0.0, BifurcationClass.DEGENERATE)
    return RegionCell(gamma, lam, True, a_c, P, o_total(params), classify(params, tol))


def _evaluate_row(args: Tuple[float, Sequence[float], Optional[float]]) -> List[RegionCell]:
    gamma, lambdas, tol = args
    return [evaluate_cell(gamma, lam, tol) for lam in lambdas]


@dataclass
class RegionSweep:
    gammas: np.ndarray
    lambdas: np.ndarray
    cells: List[List[RegionCell]]  # [i_gamma][j_lambda]

    def flat(self) -> List[RegionCell]:
        return [c for row in self.cells for c in row]

    def nearest(self, gamma: float, lam: float) -> RegionCell:
        i = int(np.argmin(np.abs(self.gammas - gamma)))
        j = int(np.argmin(np.abs(self.lambdas - lam)))
        return self.cells[i][j]

    def class_grid(self) -> np.ndarray:
        """Integer map: 1 supercritical, -1 subcritical, 2 degenerate, 0 infeasible."""
        code = {BifurcationClass.SUPERCRITICAL: 1, BifurcationClass.SUBCRITICAL: -1,
                BifurcationClass.DEGENERATE: 2}
        return np.array([[code[c.cls] if c.feasible else 0 for c in row] for row in self.cells])

    def counts(self) -> Dict[str, int]:
        grid = self.class_grid()
        return {
            "supercritical": int(np.sum(grid == 1)),
            "subcritical": int(np.sum(grid == -1)),
            "degenerate": int(np.sum(grid == 2)),
            "infeasible": int(np.sum(grid == 0)),
        }

    def save_csv(self, path: str) -> None:
        save_csv(path, CSV_HEADER, (c.row() for c in self.flat()))


def sweep_region(
    gamma_range: Tuple[float, float] = (0.05, 0.95),
    lambda_range: Tuple[float, float] = (0.5, 2.5),
    resolution: Tuple[int, int] = (101, 101),
    jobs: Optional[int] = None,
    tol: Optional[float] = None,
) -> RegionSweep:
    """Evaluate every cell of a uniform grid; rows are farmed out to `jobs` processes."""
    n_g, n_l = resolution
    if n_g < 2 or n_l < 2:
        raise ParameterDomainError("resolution must be at least 2 per axis")
    if not (0.0 < gamma_range[0] < gamma_range[1] < 1.0):
        raise ParameterDomainError(f"gamma range {gamma_range} must lie inside (0, 1)")
    gammas = np.linspace(*gamma_range, n_g)
    lambdas = np.linspace(*lambda_range, n_l)
    jobs = config.JOBS if jobs is None else jobs
    tasks = [(float(g), lambdas.tolist(), tol) for g in gammas]
    if jobs <= 1:
        rows = [_evaluate_row(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_row, tasks))
    logger.info("region sweep %dx%d with %d worker(s)", n_g, n_l, max(jobs, 1))
    return RegionSweep(gammas=gammas, lambdas=lambdas, cells=rows)


def subcritical_boundary_components(sweep: RegionSweep) -> int:
    """
    Number of 8-connected components of the closed boundary of the
    subcritical set (cells with a non-subcritical 4-neighbour or on the window edge).
    """
    mask = sweep.class_grid() == -1
    if not mask.any():
        return 0
    interior = ndimage.binary_erosion(mask, border_value=0)
    boundary = mask & ~interior
    _, n = ndimage.label(boundary, structure=np.ones((3, 3), dtype=int))
    return int(n)


def interface_components(sweep: RegionSweep) -> int:
    """Number of 8-connected pieces of the supercritical/subcritical interface."""
    grid = sweep.class_grid()
    sub = grid == -1
    sup = grid == 1
    cross = ndimage.generate_binary_structure(2, 1)
    touching = sub & ndimage.binary_dilation(sup, structure=cross)
    touching |= sup & ndimage.binary_dilation(sub, structure=cross)
    _, n = ndimage.label(touching, structure=np.ones((3, 3), dtype=int))
    return int(n)
