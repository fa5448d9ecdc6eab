"""Geometric and radiometric primitives.

Covariance construction from scale/rotation, pinhole projection of means and
covariances, 2D Gaussian evaluation, and degree-3 spherical-harmonics color.
All functions broadcast over leading axes, so a single Gaussian and a batch of
N Gaussians go through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Low-pass dilation added to the diagonal of every projected 2D covariance
# (px^2). Keeps sub-pixel splats from collapsing below the pixel grid.
COV2D_DILATION = 0.3

# Ratio clamp applied to camera-frame x/z, y/z before building the projection
# Jacobian, expressed as a multiple of the frustum half-tangent.
FRUSTUM_CLAMP = 1.3


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Return unit quaternions; raises on (near-)zero norm."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-30):
        raise InvalidInputError("quaternion with zero norm cannot be normalized")
    return q / norm


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) from (w, x, y, z) quaternions.

    Input quaternions are normalized internally, so q and -q (and any
    rescaling) yield the same matrix.
    """
    q = normalize_quaternions(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def build_covariance_3d(log_scale: np.ndarray, quaternion: np.ndarray) -> np.ndarray:
    """3D covariance R * diag(exp(ls))^2 * R^T, shape (..., 3, 3).

    Symmetric positive semi-definite by construction for finite inputs.
    """
    s = np.exp(np.asarray(log_scale, dtype=np.float64))
    R = quaternion_to_rotation(quaternion)
    M = R * s[..., None, :]  # columns of R scaled by s
    return M @ np.swapaxes(M, -1, -2)


@dataclass
class Camera:
    """Pinhole camera: world-to-camera rigid transform plus intrinsics.

    Pixel centers sit on the integer grid, x along columns and y along rows,
    so a point on the optical axis projects to ``principal_point`` exactly.
    """

    world_to_camera: np.ndarray  # (4, 4)
    focal: np.ndarray            # (fx, fy) in pixels
    principal_point: np.ndarray  # (cx, cy) in pixels
    width: int
    height: int
    near: float = 0.01
    far: float = 100.0
    name: str = ""
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        self.focal = np.asarray(self.focal, dtype=np.float64).reshape(2)
        self.principal_point = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        if self._validate:
            R = self.world_to_camera[:3, :3]
            if np.max(np.abs(R @ R.T - np.eye(3))) >= 1e-6:
                raise InvalidInputError("world_to_camera rotation block is not orthonormal")
            if not (0 < self.near < self.far):
                raise InvalidInputError(f"need 0 < near < far, got near={self.near} far={self.far}")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.float64)
        return positions @ self.rotation.T + self.translation

    def scaled(self, sx: float, sy: float, width: int, height: int) -> "Camera":
        """Camera with intrinsics rescaled for a resized render target."""
        return Camera(
            world_to_camera=self.world_to_camera,
            focal=self.focal * np.array([sx, sy]),
            principal_point=self.principal_point * np.array([sx, sy]),
            width=width,
            height=height,
            near=self.near,
            far=self.far,
            name=self.name,
        )


def project_point(camera: Camera, position: np.ndarray):
    """Project world points to pixel coordinates.

    Returns (pixel (..., 2), depth (...,), culled (...,) bool); ``culled`` is
    set for points at or behind the near plane. No exception is raised for
    culled points; the pixel value for them is unreliable.
    """
    t = camera.to_camera(position)
    depth = t[..., 2]
    culled = depth <= camera.near
    z = np.where(culled, 1.0, depth)  # dummy divisor for culled points
    pixel = camera.focal * t[..., :2] / z[..., None] + camera.principal_point
    return pixel, depth, culled


def projection_jacobian(camera: Camera, cam_point: np.ndarray, clamp: bool = True) -> np.ndarray:
    """First-order Jacobian of the pixel projection at camera-frame points.

    With ``clamp`` the x/z and y/z ratios are limited to FRUSTUM_CLAMP times
    the frustum half-tangents, which keeps the affine approximation bounded
    for Gaussians near the image border.
    """
    t = np.asarray(cam_point, dtype=np.float64)
    fx, fy = camera.focal
    tz = t[..., 2]
    rx = t[..., 0] / tz
    ry = t[..., 1] / tz
    if clamp:
        limx = FRUSTUM_CLAMP * (0.5 * camera.width) / fx
        limy = FRUSTUM_CLAMP * (0.5 * camera.height) / fy
        rx = np.clip(rx, -limx, limx)
        ry = np.clip(ry, -limy, limy)
    J = np.zeros(t.shape[:-1] + (2, 3), dtype=np.float64)
    J[..., 0, 0] = fx / tz
    J[..., 0, 2] = -fx * rx / tz
    J[..., 1, 1] = fy / tz
    J[..., 1, 2] = -fy * ry / tz
    return J


def project_covariance(camera: Camera, position: np.ndarray, sigma3d: np.ndarray) -> np.ndarray:
    """Project a 3D covariance to the image plane: J W Sigma W^T J^T + dilation."""
    t = camera.to_camera(position)
    J = projection_jacobian(camera, t)
    A = J @ camera.rotation
    cov2d = A @ np.asarray(sigma3d, dtype=np.float64) @ np.swapaxes(A, -1, -2)
    cov2d = cov2d + COV2D_DILATION * np.eye(2)
    return cov2d


def eval_gaussian_2d(sigma2d: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """exp(-0.5 d^T Sigma^-1 d) for 2x2 covariances; caller guards the determinant."""
    sigma2d = np.asarray(sigma2d, dtype=np.float64)
    d = np.asarray(offset, dtype=np.float64)
    a = sigma2d[..., 0, 0]
    b = sigma2d[..., 0, 1]
    c = sigma2d[..., 1, 1]
    det = a * c - b * b
    dx, dy = d[..., 0], d[..., 1]
    # Mahalanobis form via the adjugate: inv = [[c, -b], [-b, a]] / det.
    q = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det
    return np.exp(-0.5 * q)


def conic_from_cov2d(cov2d: np.ndarray):
    """Inverse 2D covariance as (A, B, C) with exponent A dx^2 + 2B dx dy + C dy^2.

    Returns (conic (..., 3), det (...,)). Non-positive determinants signal a
    degenerate splat and are left to the caller to cull.
    """
    a = cov2d[..., 0, 0]
    b = cov2d[..., 0, 1]
    c = cov2d[..., 1, 1]
    det = a * c - b * b
    safe = np.where(np.abs(det) < 1e-300, 1.0, det)
    conic = np.stack([c / safe, -b / safe, a / safe], axis=-1)
    return conic, det


def max_eigenvalue_2x2(cov2d: np.ndarray) -> np.ndarray:
    a = cov2d[..., 0, 0]
    b = cov2d[..., 0, 1]
    c = cov2d[..., 1, 1]
    mid = 0.5 * (a + c)
    det = a * c - b * b
    return mid + np.sqrt(np.maximum(mid * mid - det, 0.0))


# Real SH basis constants, degree 0..3, in the band/sign convention used by
# splat renderers (coefficients stored band-major: 1 + 3 + 5 + 7 = 16 terms).
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)

SH_NUM_BASIS = 16  # degree 3
SH_REST_DIM = (SH_NUM_BASIS - 1) * 3  # 45 rest coefficients per Gaussian
SH_COLOR_OFFSET = 0.5


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 degree-3 basis functions at unit directions (..., 3)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    B = np.empty(d.shape[:-1] + (SH_NUM_BASIS,), dtype=np.float64)
    B[..., 0] = SH_C0
    B[..., 1] = -SH_C1 * y
    B[..., 2] = SH_C1 * z
    B[..., 3] = -SH_C1 * x
    B[..., 4] = SH_C2[0] * xy
    B[..., 5] = SH_C2[1] * yz
    B[..., 6] = SH_C2[2] * (2 * zz - xx - yy)
    B[..., 7] = SH_C2[3] * xz
    B[..., 8] = SH_C2[4] * (xx - yy)
    B[..., 9] = SH_C3[0] * y * (3 * xx - yy)
    B[..., 10] = SH_C3[1] * xy * z
    B[..., 11] = SH_C3[2] * y * (4 * zz - xx - yy)
    B[..., 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
    B[..., 13] = SH_C3[4] * x * (4 * zz - xx - yy)
    B[..., 14] = SH_C3[5] * z * (xx - yy)
    B[..., 15] = SH_C3[6] * x * (xx - 3 * yy)
    return B


def sh_basis_gradient(dirs: np.ndarray) -> np.ndarray:
    """d(basis)/d(direction) at unit directions, shape (..., 16, 3).

    Derivatives of the raw polynomials; the projection onto the unit sphere
    (through the normalization of the direction) is the caller's job.
    """
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    G = np.zeros(d.shape[:-1] + (SH_NUM_BASIS, 3), dtype=np.float64)
    G[..., 1, 1] = -SH_C1
    G[..., 2, 2] = SH_C1
    G[..., 3, 0] = -SH_C1
    G[..., 4, 0] = SH_C2[0] * y
    G[..., 4, 1] = SH_C2[0] * x
    G[..., 5, 1] = SH_C2[1] * z
    G[..., 5, 2] = SH_C2[1] * y
    G[..., 6, 0] = SH_C2[2] * (-2 * x)
    G[..., 6, 1] = SH_C2[2] * (-2 * y)
    G[..., 6, 2] = SH_C2[2] * (4 * z)
    G[..., 7, 0] = SH_C2[3] * z
    G[..., 7, 2] = SH_C2[3] * x
    G[..., 8, 0] = SH_C2[4] * (2 * x)
    G[..., 8, 1] = SH_C2[4] * (-2 * y)
    G[..., 9, 0] = SH_C3[0] * 6 * x * y
    G[..., 9, 1] = SH_C3[0] * (3 * xx - 3 * yy)
    G[..., 10, 0] = SH_C3[1] * y * z
    G[..., 10, 1] = SH_C3[1] * x * z
    G[..., 10, 2] = SH_C3[1] * x * y
    G[..., 11, 0] = SH_C3[2] * (-2 * x * y)
    G[..., 11, 1] = SH_C3[2] * (4 * zz - xx - 3 * yy)
    G[..., 11, 2] = SH_C3[2] * (8 * y * z)
    G[..., 12, 0] = SH_C3[3] * (-6 * x * z)
    G[..., 12, 1] = SH_C3[3] * (-6 * y * z)
    G[..., 12, 2] = SH_C3[3] * (6 * zz - 3 * xx - 3 * yy)
    G[..., 13, 0] = SH_C3[4] * (4 * zz - 3 * xx - yy)
    G[..., 13, 1] = SH_C3[4] * (-2 * x * y)
    G[..., 13, 2] = SH_C3[4] * (8 * x * z)
    G[..., 14, 0] = SH_C3[5] * (2 * x * z)
    G[..., 14, 1] = SH_C3[5] * (-2 * y * z)
    G[..., 14, 2] = SH_C3[5] * (xx - yy)
    G[..., 15, 0] = SH_C3[6] * (3 * xx - 3 * yy)
    G[..., 15, 1] = SH_C3[6] * (-6 * x * y)
    return G


def sh_coefficients(sh_base: np.ndarray, sh_rest: np.ndarray) -> np.ndarray:
    """Stack base band + 45 rest coefficients into (..., 16, 3)."""
    sh_base = np.asarray(sh_base, dtype=np.float64)
    sh_rest = np.asarray(sh_rest, dtype=np.float64)
    rest = sh_rest.reshape(sh_rest.shape[:-1] + (SH_NUM_BASIS - 1, 3))
    return np.concatenate([sh_base[..., None, :], rest], axis=-2)


def eval_sh(sh_base: np.ndarray, sh_rest: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """RGB color at unit view directions: clamp(basis . coeffs + 0.5, 0)."""
    coeffs = sh_coefficients(sh_base, sh_rest)
    B = sh_basis(view_dir)
    raw = np.einsum("...b,...bc->...c", B, coeffs) + SH_COLOR_OFFSET
    return np.maximum(raw, 0.0)


def rgb_to_sh_base(rgb: np.ndarray) -> np.ndarray:
    """Band-0 coefficient that reproduces the given RGB under eval_sh."""
    return (np.asarray(rgb, dtype=np.float64) - SH_COLOR_OFFSET) / SH_C0
