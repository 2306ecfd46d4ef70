"""Coefficient algebra for two-component operator-splitting schemes.

One step of size h of a K-stage scheme applies, for k = 1..K, the first
subflow for a time alpha_k*h followed by the second subflow for beta_k*h.
Consistency (each coefficient vector summing to one) gives first order.
Palindromic alpha together with palindromic (beta_1..beta_{K-1}) and a
trailing beta_K = 0 gives time-reversal symmetry and hence an even-order
error expansion.  Symmetric consistent schemes form an affine family with
K-2 free parameters gamma, split into an alpha block of floor((K-1)/2)
entries and a beta block of floor((K-2)/2) entries; ``expand`` maps gamma
to the full coefficients and is exact, so consistency and symmetry hold by
construction no matter what gamma is.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SplitCoeffs",
    "ReducedCoeffs",
    "SchemeDescriptor",
    "PathPolyline",
    "ProjectionError",
    "transform_matrices",
    "expand",
    "reduce_coeffs",
    "check_consistency",
    "check_symmetry",
    "repeat_scheme",
    "triple_jump",
    "order_residuals",
    "project_to_fourth_order",
    "path_segments",
    "named_scheme",
    "scheme_names",
    "save_scheme",
    "load_scheme",
]


class ProjectionError(RuntimeError):
    """Raised when the fourth-order projection fails to converge."""


class SplitCoeffs:
    """Step fractions (alpha_k, beta_k) of a K-stage splitting scheme."""

    def __init__(self, alpha, beta):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if alpha.ndim != 1 or alpha.shape != beta.shape:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        if alpha.size < 1:
            raise ValueError("a scheme needs at least one stage")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("coefficients must be finite")
        self.alpha = alpha
        self.beta = beta

    @property
    def K(self) -> int:
        return self.alpha.size

    def __repr__(self):
        return "SplitCoeffs(alpha=%r, beta=%r)" % (self.alpha.tolist(), self.beta.tolist())


class ReducedCoeffs:
    """Free parameters gamma of a consistent symmetric K-stage scheme.

    gamma concatenates the alpha block (floor((K-1)/2) entries) and the
    beta block (floor((K-2)/2) entries).  K = 2 has an empty gamma: the
    only consistent symmetric 2-stage scheme is Strang.
    """

    def __init__(self, gamma, K):
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        K = int(K)
        if K < 2:
            raise ValueError("reduced parameterisation needs K >= 2")
        if gamma.size != K - 2:
            raise ValueError(f"gamma must have K-2 = {K - 2} entries, got {gamma.size}")
        if gamma.size and not np.all(np.isfinite(gamma)):
            raise ValueError("gamma must be finite")
        self.gamma = gamma
        self.K = K

    @property
    def alpha_block(self):
        return self.gamma[: (self.K - 1) // 2]

    @property
    def beta_block(self):
        return self.gamma[(self.K - 1) // 2 :]

    def __repr__(self):
        return "ReducedCoeffs(gamma=%r, K=%d)" % (self.gamma.tolist(), self.K)


def transform_matrices(K):
    """Affine expansion gamma -> (alpha, beta): returns (A, B, C, D) with
    alpha = A @ gamma_alpha + C and beta = B @ gamma_beta + D.

    The block layout depends on the parity of K; in both cases alpha is
    palindromic, beta_1..beta_{K-1} is palindromic with beta_K = 0, and the
    fixed rows absorb the consistency constraints, so the image is exactly
    the consistent symmetric family.
    """
    K = int(K)
    if K < 2:
        raise ValueError("transform matrices are defined for K >= 2")
    na = (K - 1) // 2
    nb = (K - 2) // 2
    A = np.zeros((K, na))
    B = np.zeros((K, nb))
    C = np.zeros(K)
    D = np.zeros(K)
    if K % 2 == 0:
        s = (K - 2) // 2
        A[:s, :] = np.eye(s)
        A[s : s + 2, :] = -1.0
        A[s + 2 :, :] = np.eye(s)[::-1]
        C[s : s + 2] = 0.5
        B[:s, :] = np.eye(s)
        B[s, :] = -2.0
        B[s + 1 : K - 1, :] = np.eye(s)[::-1]
        D[s] = 1.0
    else:
        sa = (K - 1) // 2
        sb = (K - 3) // 2
        A[:sa, :] = np.eye(sa)
        A[sa, :] = -2.0
        A[sa + 1 :, :] = np.eye(sa)[::-1]
        C[sa] = 1.0
        B[:sb, :] = np.eye(sb)
        B[sb : sb + 2, :] = -1.0
        B[sb + 2 : K - 1, :] = np.eye(sb)[::-1]
        D[sb : sb + 2] = 0.5
    return A, B, C, D


def expand(reduced: ReducedCoeffs) -> SplitCoeffs:
    """Expand reduced parameters into full coefficients.

    The map is affine, so downstream gradients pull back through the same
    matrices; consistency and symmetry of the result are structural.
    """
    A, B, C, D = transform_matrices(reduced.K)
    alpha = A @ reduced.alpha_block + C
    beta = B @ reduced.beta_block + D
    return SplitCoeffs(alpha, beta)


def reduce_coeffs(coeffs: SplitCoeffs, tol: float = 1e-12) -> ReducedCoeffs:
    """Invert ``expand``: read gamma off the leading coefficient entries.

    Raises ValueError when the coefficients are not (within tol) in the
    consistent symmetric family.
    """
    K = coeffs.K
    if K < 2:
        raise ValueError("reduced form needs K >= 2")
    gamma = np.concatenate([coeffs.alpha[: (K - 1) // 2], coeffs.beta[: (K - 2) // 2]])
    back = expand(ReducedCoeffs(gamma, K))
    err = max(
        np.max(np.abs(back.alpha - coeffs.alpha)),
        np.max(np.abs(back.beta - coeffs.beta)),
    )
    if err > tol:
        raise ValueError(
            f"coefficients are not consistent-symmetric within {tol:g} (deviation {err:.3e})"
        )
    return ReducedCoeffs(gamma, K)


def check_consistency(coeffs: SplitCoeffs, tol: float = 1e-12) -> bool:
    """Both coefficient sums equal one within tol."""
    return (
        abs(float(np.sum(coeffs.alpha)) - 1.0) <= tol
        and abs(float(np.sum(coeffs.beta)) - 1.0) <= tol
    )


def check_symmetry(coeffs: SplitCoeffs, tol: float = 1e-12) -> bool:
    """alpha palindromic, beta_1..beta_{K-1} palindromic, beta_K = 0."""
    a, b = coeffs.alpha, coeffs.beta
    if abs(float(b[-1])) > tol:
        return False
    if np.max(np.abs(a - a[::-1])) > tol:
        return False
    core = b[:-1]
    if core.size and np.max(np.abs(core - core[::-1])) > tol:
        return False
    return True


def _compose_scaled(coeffs: SplitCoeffs, scales) -> SplitCoeffs:
    # Concatenate scaled copies of the scheme.  When the previous copy ends
    # with beta_K == 0 its trailing first-subflow segment merges with the
    # next copy's leading one (adjacent applications of the same subflow
    # add); beta segments are never merged.
    alpha: list[float] = []
    beta: list[float] = []
    for s in scales:
        a = coeffs.alpha * s
        b = coeffs.beta * s
        k0 = 0
        if alpha and beta[-1] == 0.0:
            alpha[-1] += a[0]
            beta[-1] = b[0]
            k0 = 1
        alpha.extend(a[k0:])
        beta.extend(b[k0:])
    return SplitCoeffs(alpha, beta)


def repeat_scheme(coeffs: SplitCoeffs, n: int) -> SplitCoeffs:
    """The scheme that takes n consecutive steps of size h/n as one step.

    Equivalent by construction: applying the result once at size h is the
    same subflow sequence as applying the input n times at size h/n.
    """
    n = int(n)
    if n < 1:
        raise ValueError("repeat count must be >= 1")
    return _compose_scaled(coeffs, [1.0 / n] * n)


def triple_jump(coeffs: SplitCoeffs, p: int) -> SplitCoeffs:
    """Raise a symmetric scheme of even order p to order p + 2.

    Composes the scheme at fractions (mu, 1 - 2*mu, mu) of the step with
    mu = 1 / (2 - 2**(1/(p+1))); the negative middle fraction cancels the
    order-(p+1) error term while symmetry is preserved.
    """
    p = int(p)
    if p < 2 or p % 2:
        raise ValueError("triple jump needs an even order p >= 2")
    if not check_consistency(coeffs) or not check_symmetry(coeffs):
        raise ValueError("triple jump requires a consistent symmetric scheme")
    mu = 1.0 / (2.0 - 2.0 ** (1.0 / (p + 1)))
    return _compose_scaled(coeffs, [mu, 1.0 - 2.0 * mu, mu])


def order_residuals(coeffs: SplitCoeffs):
    """Third-order condition residuals (w112, w122).

    w112 = sum_k beta_k (sum_{j<=k} alpha_j)^2 - 1/3 and
    w122 = sum_k alpha_k (sum_{j<k} beta_j)^2 - 1/3.  For consistent
    symmetric schemes both vanish exactly when the scheme has order >= 4.
    """
    a, b = coeffs.alpha, coeffs.beta
    ca = np.cumsum(a)
    db = np.concatenate(([0.0], np.cumsum(b)[:-1]))
    w112 = float(b @ ca**2) - 1.0 / 3.0
    w122 = float(a @ db**2) - 1.0 / 3.0
    return w112, w122


def _residuals_and_jacobian(reduced: ReducedCoeffs):
    # Residuals w(gamma) and their 2 x (K-2) Jacobian, pulled back through
    # the affine expansion.
    coeffs = expand(reduced)
    a, b = coeffs.alpha, coeffs.beta
    ca = np.cumsum(a)
    db = np.concatenate(([0.0], np.cumsum(b)[:-1]))
    w = np.array([float(b @ ca**2) - 1.0 / 3.0, float(a @ db**2) - 1.0 / 3.0])
    # dw112/dalpha_j = 2 sum_{k>=j} beta_k c_k ; dw112/dbeta_k = c_k^2
    dw1_da = 2.0 * np.cumsum((b * ca)[::-1])[::-1]
    dw1_db = ca**2
    # dw122/dalpha_k = d_k^2 ; dw122/dbeta_j = 2 sum_{k>j} alpha_k d_k
    dw2_da = db**2
    t = a * db
    dw2_db = 2.0 * np.concatenate((np.cumsum(t[::-1])[::-1][1:], [0.0]))
    A, B, _, _ = transform_matrices(reduced.K)
    J = np.vstack(
        [
            np.concatenate([dw1_da @ A, dw1_db @ B]),
            np.concatenate([dw2_da @ A, dw2_db @ B]),
        ]
    )
    return w, J


def project_to_fourth_order(
    reduced: ReducedCoeffs, tol: float = 1e-12, max_iter: int = 100
) -> ReducedCoeffs:
    """Closest point (Euclidean in gamma) on the fourth-order manifold
    {w112 = w122 = 0}.

    Sequential quadratic steps: each iteration solves the exact
    least-distance problem subject to the linearised constraints, which is
    Gauss-Newton on the KKT system.  Needs K >= 5 so the two constraints
    leave at least one degree of freedom.
    """
    if reduced.K < 5:
        raise ValueError("projection needs K >= 5 (at least 3 free parameters)")
    gamma0 = reduced.gamma.copy()
    g = gamma0.copy()
    for _ in range(int(max_iter)):
        w, J = _residuals_and_jacobian(ReducedCoeffs(g, reduced.K))
        r = g - gamma0
        M = J @ J.T
        try:
            mu = np.linalg.solve(M, J @ r - w)
        except np.linalg.LinAlgError as exc:
            raise ProjectionError(f"degenerate constraint Jacobian: {exc}") from exc
        d = -r + J.T @ mu
        g = g + d
        if abs(w[0]) + abs(w[1]) <= tol and np.max(np.abs(d)) <= 1e-13 * (1.0 + np.max(np.abs(g))):
            return ReducedCoeffs(g, reduced.K)
    raise ProjectionError(f"no convergence within {max_iter} iterations")


class PathPolyline:
    """Staircase path of a scheme in the cumulative-(alpha, beta) plane.

    Vertices start at (0, 0); stage k first advances x by alpha_k, then y
    by beta_k, giving 2K+1 vertices.  Consistency is the endpoint lying at
    (1, 1); symmetry is invariance of the vertex set under 180-degree
    rotation about (0.5, 0.5).
    """

    def __init__(self, vertices):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or vertices.shape[0] < 3:
            raise ValueError("vertices must be an (n, 2) array with n >= 3")
        self.vertices = vertices

    def to_csv(self) -> str:
        lines = ["x,y"]
        for x, y in self.vertices:
            lines.append(f"{float(x)!r},{float(y)!r}")
        return "\n".join(lines) + "\n"

    def to_svg(self, size: int = 520, margin: int = 50) -> str:
        """Standalone SVG 1.1 document.

        The polyline keeps the raw path coordinates and a group transform
        maps them to the viewport, so the written points can be read back
        verbatim.
        """
        v = self.vertices
        xmin = min(float(v[:, 0].min()), 0.0)
        xmax = max(float(v[:, 0].max()), 1.0)
        ymin = min(float(v[:, 1].min()), 0.0)
        ymax = max(float(v[:, 1].max()), 1.0)
        span = max(xmax - xmin, ymax - ymin, 1e-9)
        scale = (size - 2.0 * margin) / span
        tx = margin - xmin * scale
        ty = size - margin + ymin * scale
        pts = " ".join(f"{float(x)!r},{float(y)!r}" for x, y in v)
        w = 2.0 / scale
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
            f'  <g transform="translate({tx!r},{ty!r}) scale({scale!r},{-scale!r})">\n'
            f'    <line x1="0" y1="0" x2="1" y2="1" stroke="#bbbbbb" '
            f'stroke-width="{w / 2!r}" stroke-dasharray="{4 * w!r},{4 * w!r}"/>\n'
            f'    <polyline points="{pts}" fill="none" stroke="#1f4e79" '
            f'stroke-width="{w!r}" stroke-linejoin="round"/>\n'
            "  </g>\n"
            "</svg>\n"
        )


def path_segments(coeffs: SplitCoeffs) -> PathPolyline:
    """Polyline of cumulative coefficient sums (see PathPolyline)."""
    K = coeffs.K
    verts = np.zeros((2 * K + 1, 2))
    x = 0.0
    y = 0.0
    i = 1
    for k in range(K):
        x += coeffs.alpha[k]
        verts[i] = (x, y)
        i += 1
        y += coeffs.beta[k]
        verts[i] = (x, y)
        i += 1
    return PathPolyline(verts)


class SchemeDescriptor:
    """A named scheme: full coefficients plus the reduced form if symmetric."""

    def __init__(self, name, coeffs, reduced=None, symmetric=None):
        if symmetric is None:
            symmetric = check_symmetry(coeffs)
        if reduced is not None:
            back = expand(reduced)
            err = max(
                np.max(np.abs(back.alpha - coeffs.alpha)),
                np.max(np.abs(back.beta - coeffs.beta)),
            )
            if err > 1e-14:
                raise ValueError(f"reduced form does not expand to coeffs (deviation {err:.3e})")
        self.name = str(name)
        self.coeffs = coeffs
        self.reduced = reduced
        self.symmetric = bool(symmetric)

    @property
    def K(self) -> int:
        return self.coeffs.K

    def __repr__(self):
        return f"SchemeDescriptor({self.name!r}, K={self.K}, symmetric={self.symmetric})"


def _from_gamma(name, gamma, K):
    red = ReducedCoeffs(gamma, K)
    return SchemeDescriptor(name, expand(red), red, True)


def _trotter():
    return SchemeDescriptor("trotter", SplitCoeffs([1.0], [1.0]), None, False)


def _strang():
    return _from_gamma("strang", [], 2)


def _yoshida():
    c = triple_jump(expand(ReducedCoeffs([], 2)), 2)
    return SchemeDescriptor("yoshida", c, reduce_coeffs(c), True)


def _strang4x():
    c = repeat_scheme(expand(ReducedCoeffs([], 2)), 4)
    return SchemeDescriptor("strang4x", c, reduce_coeffs(c), True)


def _learn5aproj():
    red = project_to_fourth_order(ReducedCoeffs([0.3627, -0.1003, -0.1353], 5))
    return SchemeDescriptor("learn5aproj", expand(red), red, True)


_SCHEME_BUILDERS = {
    "trotter": _trotter,
    "strang": _strang,
    "yoshida": _yoshida,
    "strang4x": _strang4x,
    "learn5a": lambda: _from_gamma("learn5a", [0.3627, -0.1003, -0.1353], 5),
    "learn8a": lambda: _from_gamma(
        "learn8a", [0.2135, -0.0582, 0.4125, -0.1352, 0.4443, -0.0251], 8
    ),
    "learn8b": lambda: _from_gamma(
        "learn8b", [0.1178, 0.3876, 0.3660, 0.2922, 0.0564, -0.0212], 8
    ),
    "learn5aproj": _learn5aproj,
}

_SCHEME_CACHE: dict[str, SchemeDescriptor] = {}


def scheme_names():
    return sorted(_SCHEME_BUILDERS)


def named_scheme(name: str) -> SchemeDescriptor:
    """Look up a built-in scheme by name (see ``scheme_names``)."""
    key = name.lower()
    if key not in _SCHEME_BUILDERS:
        raise KeyError(f"unknown scheme {name!r}; known: {', '.join(scheme_names())}")
    if key not in _SCHEME_CACHE:
        _SCHEME_CACHE[key] = _SCHEME_BUILDERS[key]()
    return _SCHEME_CACHE[key]


def _fmt_floats(values):
    return ", ".join(repr(float(v)) for v in values)


def save_scheme(desc: SchemeDescriptor, path):
    """Write a scheme descriptor as key = value text.

    Floats are written with repr (17 significant digits), enough to
    round-trip exactly.
    """
    lines = [
        f"name = {desc.name}",
        f"K = {desc.K}",
        f"symmetric = {'true' if desc.symmetric else 'false'}",
    ]
    if desc.reduced is not None:
        lines.append(f"gamma = {_fmt_floats(desc.reduced.gamma)}")
    lines.append(f"alpha = {_fmt_floats(desc.coeffs.alpha)}")
    lines.append(f"beta = {_fmt_floats(desc.coeffs.beta)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scheme(path) -> SchemeDescriptor:
    """Read a scheme descriptor written by ``save_scheme``."""
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed scheme line {line!r}")
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
    for req in ("name", "K", "symmetric", "alpha", "beta"):
        if req not in fields:
            raise ValueError(f"scheme file missing field {req!r}")

    def _floats(text):
        text = text.strip()
        if not text:
            return []
        return [float(tok) for tok in text.split(",")]

    K = int(fields["K"])
    coeffs = SplitCoeffs(_floats(fields["alpha"]), _floats(fields["beta"]))
    if coeffs.K != K:
        raise ValueError(f"K = {K} does not match {coeffs.K} coefficient stages")
    symmetric = fields["symmetric"].lower() == "true"
    reduced = None
    if "gamma" in fields:
        reduced = ReducedCoeffs(_floats(fields["gamma"]), K)
    return SchemeDescriptor(fields["name"], coeffs, reduced, symmetric)
