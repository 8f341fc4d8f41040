"""Bounded symbolic execution of kernels into lifting specifications.

Running every thread of a kernel at a small fixed shape with symbolic tensor
contents yields one symbolic expression per output element: the LiftSpec that
synthesis works against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import prod

from . import interp, kernel as K, terms as T


@dataclass(frozen=True)
class ShapeEnv:
    scalars: dict
    dims: dict  # tensor name -> tuple of concrete dims
    grid: int

    def size(self, tensor: str) -> int:
        return prod(self.dims[tensor])

    @property
    def sizes(self) -> dict:
        return {name: prod(d) for name, d in self.dims.items()}


@dataclass(frozen=True)
class SymbolicTensor:
    name: str
    pos: int  # parameter position, the canonical ordering key
    dims: tuple[int, ...]
    elements: tuple

    @property
    def size(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class LiftSpec:
    inputs: tuple[SymbolicTensor, ...]
    outputs: tuple[SymbolicTensor, ...]
    block_size: int
    live: int

    def canonical(self) -> "LiftSpec":
        outs = tuple(
            SymbolicTensor(o.name, o.pos, o.dims, tuple(T.canon(e) for e in o.elements))
            for o in self.outputs
        )
        return LiftSpec(self.inputs, outs, self.block_size, self.live)


def resolve_shapes(mod: K.KernelModule, scalars: dict) -> ShapeEnv:
    dims = {}
    for p in mod.tensor_params:
        dims[p.name] = tuple(K.eval_int_expr(d, scalars) for d in p.dims)
        if any(d < 1 for d in dims[p.name]):
            raise ValueError(f"non-positive dimension for {p.name}: {dims[p.name]}")
    grid = K.eval_int_expr(mod.grid_expr, scalars)
    if grid < 1:
        raise ValueError(f"grid size must be positive, got {grid}")
    return ShapeEnv(dict(scalars), dims, grid)


def default_shape(mod: K.KernelModule) -> ShapeEnv:
    """Smallest shape with at least two threads (annotated defaults win).

    A 2x4-style shape is the smallest that separates per-row reductions from
    global ones; kernels pin anything larger via ``name: int = N`` defaults.
    """
    free = [p for p in mod.scalar_ints]
    if not free:
        return resolve_shapes(mod, {})
    scalars = {p.name: p.default for p in free if p.default is not None}
    missing = [p.name for p in free if p.name not in scalars]
    if not missing:
        return resolve_shapes(mod, scalars)
    if len(missing) > 1:
        raise ValueError("multiple un-defaulted scalar params; annotate defaults")
    name = missing[0]
    best_fallback = None
    for v in range(1, 513):
        try:
            env = resolve_shapes(mod, {**scalars, name: v})
        except (ValueError, KeyError):
            continue
        if env.grid >= 2:
            return env
        if best_fallback is None:
            best_fallback = env
    if best_fallback is not None:
        return best_fallback
    raise ValueError(f"no feasible shape found for scalar {name}")


def execute(mod: K.KernelModule, env: ShapeEnv) -> LiftSpec:
    """Run threads pid = 0..grid-1 with symbolic tensor contents."""
    buffers = interp.run_grid(mod, interp.SymbolicDomain(), env.sizes, env.scalars, env.grid)
    return _collect(mod, env, buffers)


def _collect(mod: K.KernelModule, env: ShapeEnv, buffers: interp.Buffers) -> LiftSpec:
    inputs = []
    outputs = []
    for pos, p in enumerate(mod.params):
        if p.kind == "tin":
            inputs.append(
                SymbolicTensor(p.name, pos, env.dims[p.name], tuple(buffers.cells[p.name]))
            )
        elif p.kind == "sreal":
            inputs.append(SymbolicTensor(p.name, pos, (), (T.elem(pos, p.name, 0),)))
        elif p.kind == "tout":
            cells = buffers.cells[p.name]
            holes = [i for i, c in enumerate(cells) if c is None]
            if holes:
                raise interp.ExecError(
                    "read-unwritten",
                    f"output {p.name} has never-written elements at {holes[:8]}",
                )
            outputs.append(SymbolicTensor(p.name, pos, env.dims[p.name], tuple(cells)))
    return LiftSpec(tuple(inputs), tuple(outputs), mod.block_size, mod.live)


def thread_effects(mod: K.KernelModule, env: ShapeEnv):
    """Affine-mode single-thread run: store effects as functions of pid.

    Returns a list of (tensor, index, term) where index is ``a*pid + b``
    (LinIdx) or a plain int, and the term's element indices are affine too.
    Raises ExecError when the kernel escapes the affine pattern.
    """
    th = interp.run_thread(
        mod, interp.SymbolicDomain(), None, env.scalars, interp.LinIdx(1, 0), collect_effects=True
    )
    return th.effects


def run_concrete(mod: K.KernelModule, env: ShapeEnv, inputs: dict, order=None) -> dict:
    """Concrete host-loop execution; inputs/outputs are flat lists of numbers."""
    domain = interp.ConcreteDomain(inputs)
    buffers = interp.run_grid(mod, domain, env.sizes, env.scalars, env.grid, order=order)
    out = {}
    for p in mod.outputs:
        cells = buffers.cells[p.name]
        if any(c is None for c in cells):
            raise interp.ExecError("read-unwritten", f"output {p.name} not fully written")
        out[p.name] = list(cells)
    return out


def spec_to_json(spec: LiftSpec) -> str:
    doc = {
        "block_size": spec.block_size,
        "live": spec.live,
        "inputs": {
            t.name: {"dims": list(t.dims), "elements": [T.pretty(e) for e in t.elements]}
            for t in spec.inputs
        },
        "outputs": {
            t.name: {"dims": list(t.dims), "elements": [T.pretty(e) for e in t.elements]}
            for t in spec.outputs
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)
