from typing import Callable, TypeAlias

import numpy as np
from numpy.typing import NDArray

Vec3: TypeAlias = NDArray[np.float64]
Scalar: TypeAlias = float

VectorField: TypeAlias = Callable[[Vec3], Vec3]
ScalarField: TypeAlias = Callable[[Vec3], Scalar]
ScalarFunction: TypeAlias = Callable[[Scalar], Scalar]
UpdateMap: TypeAlias = Callable[[Vec3], Vec3]

Stepsize: TypeAlias = float
Horizon: TypeAlias = float
CellKey: TypeAlias = tuple[str, float, float]
