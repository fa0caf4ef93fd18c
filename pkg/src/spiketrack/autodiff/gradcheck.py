"""Reverse-mode gradients checked against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import AutodiffError, Tape, Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    """Outcome of one gradient check.

    max_rel_err uses |ad - fd| / max(1, |ad|, |fd|) per element, i.e. absolute
    error for small gradients and relative error for large ones.
    """

    max_rel_err: float
    tol: float
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel err {self.max_rel_err:.3e} (tol {self.tol:.1e})"


def gradcheck(
    f,
    inputs: list[Tensor],
    tol: float = 1e-4,
    h: float = 1e-6,
    max_elements_per_input: int | None = None,
    sample_seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode grads of scalar f(*inputs) with central differences.

    Every requires_grad input is perturbed elementwise in place (and restored),
    so f may read the given tensors through closures as well as arguments.
    f must be differentiable at the point; spiking paths should be evaluated
    in their smooth relaxation so the finite differences probe the surrogate.

    max_elements_per_input caps the finite-difference probes per tensor by a
    seeded random subset, keeping suites over wide layers tractable.
    """
    for t in inputs:
        if not isinstance(t, Tensor):
            raise AutodiffError("gradcheck: inputs must be Tensors")

    with Tape():
        out = f(*inputs)
        if out.data.size != 1:
            raise AutodiffError(f"gradcheck: f returned shape {out.shape}, need scalar")
        for t in inputs:
            t.zero_grad()
        backward(out)
        analytic = [
            t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
            for t in inputs
        ]
        for t in inputs:
            t.zero_grad()

    sampler = np.random.default_rng(sample_seed)
    per_input: list[float] = []
    with no_grad():
        for t, ad in zip(inputs, analytic):
            if not t.requires_grad or not t.data.size:
                per_input.append(0.0)
                continue
            flat = t.data.reshape(-1)
            ad_flat = ad.reshape(-1)
            if max_elements_per_input is not None and flat.size > max_elements_per_input:
                probe = sampler.choice(flat.size, size=max_elements_per_input, replace=False)
            else:
                probe = np.arange(flat.size)
            worst = 0.0
            for i in probe:
                orig = flat[i]
                flat[i] = orig + h
                up = f(*inputs).item()
                flat[i] = orig - h
                down = f(*inputs).item()
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                denom = max(1.0, abs(ad_flat[i]), abs(fd))
                worst = max(worst, abs(ad_flat[i] - fd) / denom)
            per_input.append(float(worst))

    max_err = max(per_input) if per_input else 0.0
    return GradCheckReport(max_rel_err=max_err, tol=tol, per_input=per_input)
