"""Interleaved dual ascent and relaxation tightening.

One stage = one ``schedule_step`` of the chosen triplet finder, adding the
returned triplets, then a fixed number of ascent passes.  The loop stops when
a stage finds nothing new or the wall-clock budget runs out; the budget is
only checked between passes and stages, so the model is always valid.  A
step that comes back empty because the eps range ran out (and so raised
``d_max``) is retried with the deeper bound until ``d_max`` reaches the
number of variables.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

from .certificate import certify_probe
from .frustrated import fr_finder
from .io import BoundTrace, read_model
from .model import Relaxation, lower_bound
from .reparam import solve_dual
from .sac import DMAX_INIT, EPS_INIT, ScheduleState, find_triplets, schedule_step

METHODS = ("sac", "fr", "fr1", "none")


@dataclass
class RunConfig:
    method: str = "sac"
    time_limit: float = 300.0
    stage_passes: int = 100
    eps0: float = EPS_INIT
    dmax0: int = DMAX_INIT
    input: str | None = None
    format: str = "native"
    trace_out: str | None = None
    certify: bool = False
    max_stages: int | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.time_limit <= 0 or self.stage_passes < 1:
            raise ValueError("time limit and stage passes must be positive")
        if self.eps0 <= 0 or self.dmax0 < 1:
            raise ValueError("eps must be positive and dmax at least 1")
        if self.format not in ("native", "uai"):
            raise ValueError(f"unknown format {self.format!r}")


def _finder(method: str):
    return find_triplets if method == "sac" else fr_finder(method)


def _count_triplets(model: Relaxation) -> int:
    return len(model.triplet_factors())


def _certify_stage(model: Relaxation, tset, eps: float, d_max: int) -> str | None:
    """Certificate for the first failing probe of the first selected node."""
    for r in tset.selected:
        info = tset.per_node.get(r)
        if info and info.failing:
            report = certify_probe(model, eps, r, info.failing[0], d_max)
            if report is not None:
                return report.to_text()
    return None


def run(config: RunConfig, model: Relaxation | None = None) -> tuple[BoundTrace, Relaxation]:
    """Run the tightening loop; ``model`` (modified in place) overrides ``config.input``."""
    config.validate()
    if model is None:
        if config.input is None:
            raise ValueError("no input model")
        model = read_model(config.input, config.format)
    start = time.perf_counter()
    deadline = start + config.time_limit
    trace = BoundTrace()
    state = ScheduleState(config.eps0, config.dmax0)

    solve_dual(model, config.stage_passes, tolerance=None, deadline=deadline)
    trace.append(time.perf_counter() - start, lower_bound(model), _count_triplets(model),
                 0, state.eps, state.d_max)
    if config.method == "none":
        return trace, model

    finder = _finder(config.method)
    stage = 0
    while time.perf_counter() < deadline:
        if config.max_stages is not None and stage >= config.max_stages:
            break
        before = state.d_max
        tset, state = schedule_step(state, model, finder, eps_init=config.eps0)
        new = tset.new_triplets(model)
        if not new:
            # an exhausted eps range raised the depth bound; retry until it covers the graph
            if config.method != "fr1" and state.d_max > before and before < model.num_vars:
                continue
            break
        stage += 1
        if config.certify and config.method == "sac":
            text = _certify_stage(model, tset, state.eps, state.d_max)
            if text is not None:
                trace.certificates.append(f"stage {stage}: {text}")
        for t in new:
            model.add_triplet(t)
        solve_dual(model, config.stage_passes, tolerance=None, deadline=deadline)
        trace.append(time.perf_counter() - start, lower_bound(model), _count_triplets(model),
                     stage, state.eps, state.d_max)
    return trace, model
