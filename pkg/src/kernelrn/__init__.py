"""Positivity analysis of operator-valued moment kernels of random matrix ensembles.

The package estimates moment kernels K(a, b) = E[A^a (A^b)*] over words of a
free semigroup by Monte Carlo, compresses them with conditional expectations
onto diagonal / block-diagonal / scalar subalgebras, and decides whether the
level-shifted kernel is dominated by the original one.  Domination is tested
two ways that must agree: a PSD verdict on the Gram difference, and the
spectrum of the Radon-Nikodym density obtained from a truncated Kolmogorov
factorization.  For bi-unitarily invariant ensembles both reduce to the
moment-ratio test c_{m+1} <= c_m, which the `moments` module runs against
analytic references (Catalan, Fuss-Catalan, Marchenko-Pastur).  The `vn`
module checks the companion mean-square von Neumann inequalities against
creation-operator norms on a truncated Fock space.

Hot Monte Carlo accumulation loops run through numba kernels with a pure
numpy fallback; select with the environment variable ``KERNELRN_BACKEND``
(``numba`` or ``numpy``).
"""

__version__ = "0.1.0"

from kernelrn.ensembles import (
    BlockGinibre,
    Deterministic,
    Ginibre,
    GinibreRaw,
    GinibreTuple,
    HaarUnitary,
    SampleIdentity,
    phase_invariant,
    sample,
)
from kernelrn.kernel import (
    KernelEstimate,
    NoisyEstimateError,
    Subalgebra,
    assemble_gram,
    conditional_expectation,
    estimate_kernel,
    shifted_kernel,
)
from kernelrn.moments import (
    MomentSequence,
    RatioVerdict,
    block_c_sequence,
    c_sequence,
    catalan,
    cd_sequences,
    d_sequence,
    fuss_catalan_moment,
    mp_moment,
    ratio_test,
)
from kernelrn.rn import (
    DensityReport,
    KolmogorovFactor,
    RnTolerances,
    kolmogorov_factor,
    order_test,
    rn_density,
    shift_analysis,
    shift_density,
)
from kernelrn.vn import (
    CreationNormBound,
    NcPolynomial,
    creation_matrix,
    creation_norm,
    vector_bound_check,
    vn_check,
)
from kernelrn.words import Word, enumerate_words

__all__ = [
    "BlockGinibre",
    "CreationNormBound",
    "DensityReport",
    "Deterministic",
    "Ginibre",
    "GinibreRaw",
    "GinibreTuple",
    "HaarUnitary",
    "KernelEstimate",
    "KolmogorovFactor",
    "MomentSequence",
    "NcPolynomial",
    "NoisyEstimateError",
    "RatioVerdict",
    "RnTolerances",
    "SampleIdentity",
    "Subalgebra",
    "Word",
    "assemble_gram",
    "block_c_sequence",
    "c_sequence",
    "catalan",
    "cd_sequences",
    "conditional_expectation",
    "creation_matrix",
    "creation_norm",
    "d_sequence",
    "enumerate_words",
    "estimate_kernel",
    "fuss_catalan_moment",
    "kolmogorov_factor",
    "mp_moment",
    "order_test",
    "phase_invariant",
    "ratio_test",
    "rn_density",
    "sample",
    "shift_analysis",
    "shift_density",
    "shifted_kernel",
    "vector_bound_check",
    "vn_check",
]
