"""One-call construction of everything derived from a chain spec."""

from __future__ import annotations

from dataclasses import dataclass

from .biorthogonal import (
    BiorthogonalSystem,
    ChainMomentMatrix,
    biorthogonalize,
    chain_moment_matrix,
    refine_duality,
)
from .chain import ChainSpec, validate_chain
from .kernel import BlockKernel, KernelEvaluator, PropagatedSystem, build_block_kernel, propagate


@dataclass(frozen=True, eq=False)
class Ensemble:
    spec: ChainSpec
    moments: ChainMomentMatrix
    bio: BiorthogonalSystem
    prop: PropagatedSystem
    kernel: BlockKernel

    @classmethod
    def build(cls, spec: ChainSpec) -> "Ensemble":
        spec = validate_chain(spec)
        moments = chain_moment_matrix(spec)
        bio = refine_duality(biorthogonalize(moments), moments)
        prop = propagate(spec, bio)
        return cls(spec, moments, bio, prop, build_block_kernel(spec, prop))

    @property
    def evaluator(self) -> KernelEvaluator:
        return self.kernel.evaluator
