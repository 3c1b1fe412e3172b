"""Multi-round recursion driving the construction step over a schedule.

A run starts from the constant-identity step function and repeatedly
applies the single construction step to scheduled (base set, candidate,
neighborhood) triples, with a tolerance schedule that strictly halves,
respects the admission rule of the step, and never exceeds the
robustness reserve of the witnesses already stored.  Each round records
the step's certificate bundle, the independent validator's verdict, and
an essential-value witness check; the terminal report adds a value
boundedness certificate, essential-value sweeps over the scheduled
triples, the skew-product connectivity ladder with its trivial control,
a stabilization ledger, and exact distance bounds from each round's
increments to the terminal ones.

Reports are line-delimited JSON with all rationals rendered exactly and
keys sorted, so identical configurations produce byte-identical output.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .cocycles import (CocycleKernel, StepFunction, coboundary_increment,
                       cocycle_distance, increment_agreement,
                       increments_within)
from .errors import CocycleLabError, ConfigError, SearchExhausted
from .evc import (check_evc, delta_for, essential_value_certificate,
                  skew_connectivity, target_set, validate_witness)
from .groups import (GroupModel, closure_norm_bound, conjugate_closure,
                     model_from_config)
from .measure import ZERO, CylinderSet, ProductMeasure, all_words
from .odometer import (FiniteDepthMap, GammaAction, adding_machine_action,
                       coordinate_flip, flip_action)
from .stepper import (Certificate, StepInput, StepOutput, construct_step,
                      validate_step_output)

ADMISSION_FACTOR = 40  # eps <= mu(base) / (ADMISSION_FACTOR * covering number)
SCHEDULE_SHRINK = Fraction(7, 8)  # makes the halving strict


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Declarative description of a run; see PRESETS for examples."""

    group: Mapping
    measure: Mapping
    action: Mapping
    family: tuple[str, ...]
    bases: tuple[tuple[str, ...], ...]
    u_indices: tuple[int, ...]
    rounds: int
    depth_budget: int = 14
    start_level: int = 1
    eps_start: Optional[str] = None
    name: str = "run"

    @staticmethod
    def from_mapping(raw: Mapping) -> "PipelineConfig":
        try:
            bases = []
            for entry in raw.get("bases", [""]):
                if isinstance(entry, str):
                    bases.append((entry,))
                else:
                    bases.append(tuple(str(w) for w in entry))
            return PipelineConfig(
                group=dict(raw["group"]),
                measure=dict(raw.get("measure", {"kind": "uniform"})),
                action=dict(raw["action"]),
                family=tuple(str(h) for h in raw["family"]),
                bases=tuple(bases),
                u_indices=tuple(int(k) for k in raw.get("u_indices", [1])),
                rounds=int(raw.get("rounds", 1)),
                depth_budget=int(raw.get("depth_budget", 14)),
                start_level=int(raw.get("start_level", 1)),
                eps_start=raw.get("eps_start"),
                name=str(raw.get("name", "run")),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key: {exc.args[0]}") from None

    def to_mapping(self) -> dict:
        return {
            "group": dict(self.group),
            "measure": dict(self.measure),
            "action": dict(self.action),
            "family": list(self.family),
            "bases": [list(b) for b in self.bases],
            "u_indices": list(self.u_indices),
            "rounds": self.rounds,
            "depth_budget": self.depth_budget,
            "start_level": self.start_level,
            "eps_start": self.eps_start,
            "name": self.name,
        }

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_mapping(), sort_keys=True).encode()).hexdigest()

    def build_model(self) -> GroupModel:
        return model_from_config(self.group)

    def build_measure(self) -> ProductMeasure:
        kind = self.measure.get("kind", "uniform")
        if kind == "uniform":
            return ProductMeasure.uniform()
        if kind == "iid":
            return ProductMeasure.iid(Fraction(str(self.measure["p0"])))
        if kind == "schedule":
            head = [tuple(Fraction(str(x)) for x in p)
                    for p in self.measure.get("head", [])]
            cycle = [tuple(Fraction(str(x)) for x in p)
                     for p in self.measure["cycle"]]
            return ProductMeasure.from_schedule(head, cycle)
        raise ConfigError(f"unknown measure kind {kind!r}")

    def build_action(self, round_index: Optional[int] = None) -> GammaAction:
        kind = self.action.get("kind")
        if kind == "adding-machine":
            return adding_machine_action(int(self.action.get("depth", 12)))
        if kind == "flips":
            return flip_action(tuple(int(c) for c in self.action["coords"]))
        if kind == "flip-stream":
            # enumerated generator branch: round n sees the first n flips
            if round_index is None:
                round_index = self.rounds
            return flip_action(tuple(range(1, max(round_index, 1) + 1)))
        raise ConfigError(f"unknown action kind {kind!r}")

    @property
    def enumerated(self) -> bool:
        return self.action.get("kind") == "flip-stream"


PRESETS: dict[str, dict] = {
    # coordinate flips keep every refinement level one step above the
    # previous working depth, so six rounds fit far inside depth 14
    "z2-flips": {
        "name": "z2-flips",
        "group": {"kind": "cyclic", "order": 2},
        "measure": {"kind": "uniform"},
        "action": {"kind": "flips", "coords": [1, 2]},
        "family": ["1"],
        "bases": ["", "0", "1"],
        "u_indices": [1],
        "rounds": 6,
    },
    "z3-flips": {
        "name": "z3-flips",
        "group": {"kind": "cyclic", "order": 3},
        "measure": {"kind": "uniform"},
        "action": {"kind": "flips", "coords": [1, 2]},
        "family": ["1", "2"],
        "bases": ["", "0", "1"],
        "u_indices": [1],
        "rounds": 6,
    },
    # one adding-machine round; the truncated odometer's overflow mass
    # floors at its declared depth, which caps how many rounds fit
    "z2-adding": {
        "name": "z2-adding",
        "group": {"kind": "cyclic", "order": 2},
        "measure": {"kind": "uniform"},
        "action": {"kind": "adding-machine", "depth": 12},
        "family": ["1"],
        "bases": [""],
        "u_indices": [1],
        "rounds": 1,
    },
    "z2-flip-stream": {
        "name": "z2-flip-stream",
        "group": {"kind": "cyclic", "order": 2},
        "measure": {"kind": "uniform"},
        "action": {"kind": "flip-stream"},
        "family": ["1"],
        "bases": ["", "0"],
        "u_indices": [1],
        "rounds": 4,
    },
    "sum-z": {
        "name": "sum-z",
        "group": {"kind": "direct-sum-z", "generator_span": 2},
        "measure": {"kind": "uniform"},
        "action": {"kind": "flips", "coords": [1, 2]},
        "family": ["1", "-1", "0/1", "0/-1"],
        "bases": ["", "0"],
        "u_indices": [1],
        "rounds": 3,
    },
    "sum-z-wide": {
        "name": "sum-z-wide",
        "group": {"kind": "direct-sum-z", "generator_span": 2},
        "measure": {"kind": "uniform"},
        "action": {"kind": "flips", "coords": [1, 2]},
        "family": ["5", "-5", "0/5", "0/-5"],
        "bases": [""],
        "u_indices": [1],
        "rounds": 2,
    },
}


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Triple:
    base_words: tuple[str, ...]
    candidate: str
    u_index: int

    def base(self) -> CylinderSet:
        return CylinderSet.of(self.base_words)

    def label(self) -> str:
        words = "+".join(self.base_words) or "X"
        return f"({words}, {self.candidate}, U{self.u_index})"

    def to_mapping(self) -> dict:
        return {"base": list(self.base_words), "candidate": self.candidate,
                "u_index": self.u_index}


@dataclass(frozen=True)
class Schedule:
    """Prefix-block enumeration of the base triple list: the flattened
    sequence of its prefixes, so the k-th base triple occurs in every
    block from the k-th on and hence infinitely often in the idealized
    extension."""

    triples: tuple[Triple, ...]

    @staticmethod
    def from_config(config: PipelineConfig) -> "Schedule":
        base = [Triple(words, g, u)
                for words in config.bases
                for g in config.family
                for u in config.u_indices]
        if not base:
            raise ConfigError("the schedule needs at least one triple")
        return Schedule(tuple(base))

    def round_triple(self, index: int) -> Triple:
        """Triple for 0-based round `index` of the flattened sequence."""
        block = 1
        pos = index
        while True:
            size = min(block, len(self.triples))
            if pos < size:
                return self.triples[pos]
            pos -= size
            block += 1

    def next_occurrence(self, triple: Triple, after: int) -> int:
        pos = after + 1
        while True:
            if self.round_triple(pos) == triple:
                return pos
            pos += 1

    def recurrence_record(self, executed: int) -> dict:
        seen = []
        for i in range(executed):
            t = self.round_triple(i)
            if t not in seen:
                seen.append(t)
        return {
            "executed": executed,
            "distinct": [t.label() for t in seen],
            "next_occurrence": {
                t.label(): self.next_occurrence(t, executed - 1) for t in seen},
        }


# ---------------------------------------------------------------------------
# Report plumbing
# ---------------------------------------------------------------------------

def _frac(x: Fraction) -> str:
    return str(Fraction(x))


def _cert_record(c: Certificate) -> dict:
    return {"clause": c.clause, "ok": c.ok, "detail": c.detail}


def _function_table(f: StepFunction) -> dict:
    return {w: f.model.format(v) for w, v in sorted(f.table.items())}


def _set_words(s: CylinderSet) -> list[str]:
    return list(s.words)


@dataclass(frozen=True)
class RunReport:
    records: tuple[dict, ...]

    def lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":"))
                for r in self.records]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.text())

    def by_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r.get("record") == kind]


def load_report(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class CocycleApproximant:
    """Terminal step function of a finite run plus the exact tail bound
    covering all never-executed rounds."""

    function: StepFunction
    level: int
    rounds: int
    eps_history: tuple[Fraction, ...]

    @property
    def tail_bound(self) -> Fraction:
        # strict halving: the tolerances after round N sum below eps_N
        return self.eps_history[-1] if self.eps_history else ZERO


# ---------------------------------------------------------------------------
# The recursion
# ---------------------------------------------------------------------------

def _generator_groups(action: GammaAction) -> list[tuple[tuple[str, ...], GammaAction]]:
    """Split the generator list into inverse-closed subfamilies (a
    self-inverse generator alone, otherwise the generator with its
    inverse) so per-generator ledgers stay well-defined."""
    out: list[tuple[tuple[str, ...], GammaAction]] = []
    seen: set[str] = set()
    for label, g in action.generators:
        if label in seen:
            continue
        if frozenset(g.pieces) == frozenset((t, s) for s, t in g.pieces):
            out.append(((label,), GammaAction(label, ((label, g),))))
            seen.add(label)
            continue
        partner = next((l2, g2) for l2, g2 in action.generators
                       if l2 != label
                       and frozenset(g2.pieces) == frozenset((t, s) for s, t in g.pieces))
        out.append(((label, partner[0]),
                    GammaAction(f"{label}+{partner[0]}", ((label, g), partner))))
        seen.update((label, partner[0]))
    return out


def _admission_bound(model: GroupModel, mu: ProductMeasure,
                     triple: Triple) -> Fraction:
    delta, cover = delta_for(model, model.parse(triple.candidate),
                             triple.u_index)
    del delta
    return triple.base().measure(mu) / (ADMISSION_FACTOR * cover.number)


def _initial_function(model: GroupModel, level: int) -> StepFunction:
    e = model.identity()
    return StepFunction(model, level, {w: e for w in all_words(level)})


@dataclass
class _RoundState:
    index: int
    triple: Triple
    eps: Fraction
    output: StepOutput
    witness_slack: Fraction
    change_sets: dict[tuple[str, ...], CylinderSet]


def _run_recursion(config: PipelineConfig,
                   out_dir: Optional[str] = None,
                   resume: bool = False) -> tuple[CocycleApproximant, RunReport]:
    model = config.build_model()
    mu = config.build_measure()
    schedule = Schedule.from_config(config)
    family = tuple(model.parse(h) for h in config.family)
    closure = conjugate_closure(model, family)

    records: list[dict] = [{
        "record": "header",
        "format": 1,
        "config": config.to_mapping(),
        "config_digest": config.digest(),
        "schedule": [t.to_mapping() for t in schedule.triples],
        "closure": sorted(model.format(h) for h in closure),
    }]

    f = _initial_function(model, max(config.start_level, 1))
    n = config.start_level
    eps_history: list[Fraction] = []
    reserves: list[Fraction] = []
    states: list[_RoundState] = []
    functions: list[StepFunction] = [f]
    start_round = 0

    if resume and out_dir:
        loaded = _load_checkpoint(config, out_dir)
        if loaded is not None:
            records, f, n, eps_history, reserves, states, functions, start_round = loaded

    for t in range(start_round, config.rounds):
        action = config.build_action(t + 1)
        triple = schedule.round_triple(t)
        admission = _admission_bound(model, mu, triple)
        if not eps_history:
            eps = admission
            if config.eps_start is not None:
                eps = min(Fraction(config.eps_start), admission)
            rule = {"admission": _frac(admission), "chosen": _frac(eps)}
        else:
            candidates = {
                "previous_half": eps_history[-1] / 2,
                "admission": admission,
            }
            if reserves:
                candidates["min_reserve"] = min(reserves)
            eps = SCHEDULE_SHRINK * min(candidates.values())
            rule = {k: _frac(v) for k, v in candidates.items()}
            rule["shrink"] = _frac(SCHEDULE_SHRINK)
            rule["chosen"] = _frac(eps)
        if eps <= 0:
            raise ConfigError(f"round {t + 1}: tolerance collapsed to {eps}")

        inp = StepInput(f=f, n=n, action=action, family=family,
                        target=triple.base(),
                        candidate=model.parse(triple.candidate),
                        u_index=triple.u_index, eps=eps, mu=mu,
                        depth_budget=config.depth_budget)
        out = construct_step(inp)
        validator = validate_step_output(inp, out)

        kernel = CocycleKernel.coboundary(out.f_tilde,
                                          class_depth=out.f_tilde.depth)
        targets = target_set(model, inp.candidate, triple.u_index)
        witness_check = validate_witness(kernel, triple.base(), targets,
                                         out.delta, mu, out.core, out.theta)
        try:
            fresh = check_evc(kernel, triple.base(), targets, out.delta, mu,
                              search_depth=config.depth_budget)
            fresh_rec = {"ok": True, "mass": _frac(fresh.part.measure(mu)),
                         "measure_slack": _frac(fresh.measure_slack)}
        except SearchExhausted as exc:
            fresh_rec = {"ok": False, "failure": str(exc)}

        change_sets: dict[tuple[str, ...], CylinderSet] = {}
        for labels, sub in _generator_groups(action):
            agree = increment_agreement(f, out.f_tilde, sub)
            change_sets[labels] = agree.agreement.complement()

        inc = increments_within(out.f_tilde, action, closure)
        agreement = increment_agreement(f, out.f_tilde, action).measure(mu)
        old_inc = [coboundary_increment(f, g) for g in action.maps()]
        new_inc = [coboundary_increment(out.f_tilde, g) for g in action.maps()]
        dist = cocycle_distance(old_inc, new_inc, mu).upper()

        conditions = {
            "finite_values": len(out.f_tilde.value_set()),
            "inner": out.certificate("inner").ok,
            "incremental": inc.ok,
            "agreement": _frac(agreement),
            "agreement_ok": agreement > 1 - eps,
            "distance": _frac(dist),
            "distance_ok": dist < eps,
            "evc_witness_ok": witness_check.ok,
            "evc_search": fresh_rec,
        }

        state = _RoundState(t + 1, triple, eps, out,
                            witness_check.measure_slack, change_sets)
        states.append(state)
        eps_history.append(eps)
        reserves.append(witness_check.measure_slack / 4)
        functions.append(out.f_tilde)

        records.append({
            "record": "round",
            "round": t + 1,
            "triple": triple.to_mapping(),
            "level": n,
            "refined_level": out.m,
            "working_depth": out.working_depth,
            "eps": _frac(eps),
            "eps_rule": rule,
            "eps_prime": _frac(out.eps_prime),
            "delta": _frac(out.delta),
            "conjugate": model.format(out.h),
            "admission": _cert_record(out.admission),
            "certificates": [_cert_record(c) for c in out.certificates],
            "validator": [_cert_record(c) for c in validator],
            "conditions": conditions,
            "witness": {
                "core": _set_words(out.core),
                "moves": sorted(out.theta.moves.items()),
                "measure_slack": _frac(witness_check.measure_slack),
                "reserve": _frac(witness_check.measure_slack / 4),
            },
            "artifacts": {
                "f": _function_table(out.f_tilde),
                "z0": _set_words(out.z0),
                "b_set": _set_words(out.b_set),
                "core_mass": _frac(out.core.measure(mu)),
                "change_mass": {
                    "+".join(k): _frac(v.measure(mu))
                    for k, v in change_sets.items()},
            },
        })

        f = out.f_tilde
        n = out.m
        if out_dir:
            _save_checkpoint(config, out_dir, records, f, n, eps_history,
                             reserves, states, functions)

    terminal_action = config.build_action(config.rounds)
    records.append({"record": "recurrence",
                    **schedule.recurrence_record(config.rounds)})
    records.extend(_terminal_records(config, model, mu, terminal_action,
                                     closure, functions, states, eps_history, n))
    approx = CocycleApproximant(f, n, config.rounds, tuple(eps_history))
    report = RunReport(tuple(records))
    if out_dir:
        report.write(os.path.join(out_dir, "report.jsonl"))
    return approx, report


def _terminal_records(config: PipelineConfig, model: GroupModel,
                      mu: ProductMeasure, action: GammaAction,
                      closure: tuple, functions: Sequence[StepFunction],
                      states: Sequence[_RoundState],
                      eps_history: Sequence[Fraction],
                      final_level: int) -> list[dict]:
    f_final = functions[-1]
    records: list[dict] = []

    # value boundedness: all increments inside {identity} u closure
    bound_check = increments_within(f_final, action, closure)
    per_gen = {}
    for label, g in action.generators:
        inc = coboundary_increment(f_final, g)
        values = sorted(model.format(v) for v in inc.value_set())
        per_gen[label] = values
    records.append({
        "record": "boundedness",
        "closure": sorted(model.format(h) for h in closure),
        "ok": bound_check.ok,
        "per_generator": per_gen,
    })

    if config.enumerated:
        records.append(_stream_record(config, model, functions, closure))

    # essential-value sweep over the scheduled triples, terminal kernel
    kernel = CocycleKernel.coboundary(f_final, class_depth=f_final.depth)
    base_sets = [CylinderSet.of(words) for words in config.bases]
    sweeps = []
    for h_text in config.family:
        report = essential_value_certificate(
            kernel, model.parse(h_text), mu, base_sets,
            list(config.u_indices), search_depth=config.depth_budget)
        sweeps.append({
            "candidate": h_text,
            "verdict": report.verdict,
            "entries": [{
                "base": _set_words(e.base),
                "u_index": e.u_index,
                "delta": _frac(e.delta),
                "ok": e.ok,
                "mass": _frac(e.witness.part.measure(mu)) if e.witness else None,
            } for e in report.entries],
        })
    records.append({"record": "essential_values", "sweeps": sweeps})

    # connectivity ladder (finite groups only); the deepest rung stops
    # one short of the kernel depth, where fibers can still interact
    if model.elements() is not None:
        rung_depths = list(range(1, f_final.depth)) or [f_final.depth]
        rungs = []
        control = []
        trivial = CocycleKernel.trivial(model, f_final.depth, f_final.depth)
        for depth in rung_depths:
            rungs.append(skew_connectivity(kernel, depth=depth).components)
            control.append(skew_connectivity(trivial, depth=depth).components)
        records.append({
            "record": "ladder",
            "kernel_depth": f_final.depth,
            "rung_depths": rung_depths,
            "components": rungs,
            "control_components": control,
            "nonincreasing": all(b <= a for a, b in zip(rungs, rungs[1:])),
            "terminal_components": rungs[-1] if rungs else None,
            "control_constant": control == [len(model.elements())] * len(control),
        })

    # stabilization ledger: changes after round n stay under the eps tail
    ledger = {}
    for labels, _ in _generator_groups(action):
        rows = []
        for n_idx in range(len(states)):
            union = CylinderSet.empty()
            bound = ZERO
            for state in states[n_idx:]:
                # rounds before a generator joins contribute no changes
                if labels in state.change_sets:
                    union = union.union(state.change_sets[labels])
                bound += state.eps
            rows.append({
                "after_round": n_idx,
                "change_mass": _frac(union.measure(mu)),
                "eps_tail": _frac(bound),
                "ok": union.measure(mu) <= bound,
            })
        ledger["+".join(labels)] = rows
    records.append({"record": "stabilization", "ledger": ledger})

    # exact distances from each round's increments to the terminal ones
    distances = []
    for idx in range(len(functions) - 1):
        act = config.build_action(max(idx, 1)) if config.enumerated else action
        old = [coboundary_increment(functions[idx], g) for g in act.maps()]
        new = [coboundary_increment(functions[-1], g) for g in act.maps()]
        dist = cocycle_distance(old, new, mu).upper()
        tail = sum(eps_history[idx:], ZERO)
        distances.append({
            "from_round": idx,
            "distance": _frac(dist),
            "eps_tail": _frac(tail),
            "ok": dist <= tail or dist == 0,
        })
    records.append({"record": "distances", "rows": distances})

    records.append({
        "record": "final",
        "depth": f_final.depth,
        "level": final_level,
        "f": _function_table(f_final),
        "eps_history": [_frac(e) for e in eps_history],
        "tail_bound": _frac(eps_history[-1]) if eps_history else "0",
        "halving_ok": all(b < a / 2 for a, b in zip(eps_history, eps_history[1:])),
    })
    return records


def _stream_record(config: PipelineConfig, model: GroupModel,
                   functions: Sequence[StepFunction], closure: tuple) -> dict:
    """For the enumerated-generator branch: the per-generator value
    certificate with K_j built from the value set F_j of the function
    present when generator j joined."""
    f_final = functions[-1]
    rows = []
    for j in range(1, config.rounds + 1):
        f_j = functions[min(j, len(functions) - 1)]
        values = f_j.value_set()
        k_j = sorted({model.key(model.mul(a, model.inv(b)))
                      for a in values for b in values})
        allowed = set(k_j) | {model.key(h) for h in closure}
        allowed.add(model.key(model.identity()))
        inc = coboundary_increment(f_final, coordinate_flip(j))
        realized = sorted(model.key(v) for v in inc.value_set())
        rows.append({
            "generator": f"s{j}",
            "f_values": len(values),
            "k_size": len(k_j),
            "k_size_bound_ok": len(k_j) <= len(values) ** 2,
            "realized": [str(k) for k in realized],
            "ok": all(k in allowed for k in realized),
        })
    return {"record": "stream_bounds", "rows": rows,
            "ok": all(r["ok"] for r in rows)}


# ---------------------------------------------------------------------------
# Public pipelines
# ---------------------------------------------------------------------------

def run_theorem_02i(config: PipelineConfig, out_dir: Optional[str] = None,
                    resume: bool = False) -> tuple[CocycleApproximant, RunReport]:
    """Finitely many generators, fixed for the whole run."""
    if config.enumerated:
        raise ConfigError("use run_theorem_02ii for enumerated generator streams")
    return _run_recursion(config, out_dir, resume)


def run_theorem_02ii(config: PipelineConfig, out_dir: Optional[str] = None,
                     resume: bool = False) -> tuple[CocycleApproximant, RunReport]:
    """Enumerated generator stream; round n works with the first n
    generators and their inverses."""
    if not config.enumerated:
        raise ConfigError("run_theorem_02ii needs an enumerated generator stream")
    return _run_recursion(config, out_dir, resume)


def bounded_cocycle_pipeline(config: PipelineConfig,
                             out_dir: Optional[str] = None) -> RunReport:
    """Run the recursion and close with the compact-range certificate:
    every generator's increments stay in {identity} u closure."""
    approx, report = _run_recursion(config, out_dir)
    bound = report.by_kind("boundedness")[0]
    record = {
        "record": "compact_range",
        "range_set": ["0" if not bound["closure"] else "identity"] + bound["closure"],
        "ok": bound["ok"],
        "rounds": approx.rounds,
    }
    report = RunReport(report.records + (record,))
    if out_dir:
        report.write(os.path.join(out_dir, "report.jsonl"))
    return report


def norm_bounded_pipeline(config: PipelineConfig,
                          out_dir: Optional[str] = None) -> RunReport:
    """Recursion over a normed model; emits the per-generator norm bound
    c with norm(increment) <= c(generator) everywhere defined."""
    model = config.build_model()
    family = tuple(model.parse(h) for h in config.family)
    closure = conjugate_closure(model, family)
    sup = closure_norm_bound(model, closure)
    if sup is None:
        raise ConfigError("the group model carries no norm")
    approx, report = _run_recursion(config, out_dir)
    action = config.build_action(config.rounds)
    rows = {}
    worst = ZERO
    for label, g in action.generators:
        inc = coboundary_increment(approx.function, g)
        norms = [model.norm(v) for v in inc.value_set()]
        c = max(norms, default=ZERO)
        worst = max(worst, c)
        rows[label] = {"c": _frac(c), "ok": c <= sup}
    record = {
        "record": "norm_bounds",
        "sup_family_norm": _frac(sup),
        "per_generator": rows,
        "max_c": _frac(worst),
        "ok": worst <= sup,
    }
    report = RunReport(report.records + (record,))
    if out_dir:
        report.write(os.path.join(out_dir, "report.jsonl"))
    return report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _save_checkpoint(config, out_dir, records, f, n, eps_history, reserves,
                     states, functions) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "digest": config.digest(),
        "round": len(states),
        "level": n,
        "records": records,
        "eps_history": [_frac(e) for e in eps_history],
        "reserves": [_frac(r) for r in reserves],
        "functions": [{"depth": fn.depth, "table": _function_table(fn)}
                      for fn in functions],
        "states": [{
            "index": s.index,
            "triple": s.triple.to_mapping(),
            "eps": _frac(s.eps),
            "witness_slack": _frac(s.witness_slack),
            "change_sets": {"+".join(k): _set_words(v)
                            for k, v in s.change_sets.items()},
        } for s in states],
    }
    tmp = os.path.join(out_dir, "checkpoint.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, os.path.join(out_dir, "checkpoint.json"))


def _load_checkpoint(config: PipelineConfig, out_dir: str):
    path = os.path.join(out_dir, "checkpoint.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("digest") != config.digest():
        return None
    model = config.build_model()
    functions = [StepFunction(model, fn["depth"],
                              {w: model.parse(v) for w, v in fn["table"].items()})
                 for fn in payload["functions"]]
    states = []
    for raw in payload["states"]:
        triple = Triple(tuple(raw["triple"]["base"]), raw["triple"]["candidate"],
                        raw["triple"]["u_index"])
        change = {tuple(k.split("+")): CylinderSet.of(v)
                  for k, v in raw["change_sets"].items()}
        # outputs are not rehydrated; resumed runs only need the ledger data
        states.append(_RoundState(raw["index"], triple, Fraction(raw["eps"]),
                                  None, Fraction(raw["witness_slack"]), change))
    eps_history = [Fraction(e) for e in payload["eps_history"]]
    reserves = [Fraction(r) for r in payload["reserves"]]
    return (list(payload["records"]), functions[-1], payload["level"],
            eps_history, reserves, states, functions, payload["round"])


# ---------------------------------------------------------------------------
# Report certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _ReplayOutput:
    """The slice of a step output the independent validator reads."""

    f_tilde: StepFunction
    theta: "FiniteDepthMap"
    core: CylinderSet
    m: int
    h: object
    delta: Fraction
    working_depth: int


def certify_report(records: Sequence[dict]) -> list[dict]:
    """Re-validate a stored report from its embedded artifacts; returns a
    list of failure records (empty means the report is sound)."""
    failures: list[dict] = []

    def fail(clause: str, where: str, detail: str = "") -> None:
        failures.append({"clause": clause, "where": where, "detail": detail})

    headers = [r for r in records if r.get("record") == "header"]
    if len(headers) != 1:
        return [{"clause": "header", "where": "report",
                 "detail": "expected exactly one header record"}]
    config = PipelineConfig.from_mapping(headers[0]["config"])
    if headers[0].get("config_digest") != config.digest():
        fail("config_digest", "header", "config does not match its digest")
    model = config.build_model()
    mu = config.build_measure()
    schedule = Schedule.from_config(config)

    rounds = [r for r in records if r.get("record") == "round"]
    f_prev = _initial_function(model, max(config.start_level, 1))
    n = config.start_level
    prev_eps: Optional[Fraction] = None
    functions = [f_prev]
    for rec in rounds:
        t = rec["round"]
        where = f"round {t}"
        action = config.build_action(t)
        triple = schedule.round_triple(t - 1)
        if triple.to_mapping() != rec["triple"]:
            fail("schedule", where, "triple differs from the configured schedule")
        eps = Fraction(rec["eps"])
        if prev_eps is not None and not eps < prev_eps / 2:
            fail("eps_halving", where,
                 f"{eps} is not below half of {prev_eps}")
        prev_eps = eps

        f = StepFunction(model, len(next(iter(rec["artifacts"]["f"]))),
                         {w: model.parse(v)
                          for w, v in rec["artifacts"]["f"].items()})
        theta = FiniteDepthMap(f.depth,
                               {w: img for w, img in rec["witness"]["moves"]})
        core = CylinderSet.of(rec["witness"]["core"])
        h = model.parse(rec["conjugate"])
        delta = Fraction(rec["delta"])
        replay = _ReplayOutput(f, theta, core, rec["refined_level"], h, delta,
                               rec["working_depth"])
        inp = StepInput(f=f_prev, n=n, action=action,
                        family=tuple(model.parse(x) for x in config.family),
                        target=triple.base(),
                        candidate=model.parse(triple.candidate),
                        u_index=triple.u_index, eps=eps, mu=mu,
                        depth_budget=config.depth_budget)
        try:
            checks = validate_step_output(inp, replay)
        except CocycleLabError as exc:
            fail("validator", where, str(exc))
            checks = ()
        for c in checks:
            if not c.ok:
                fail(c.clause, where, c.detail)

        kernel = CocycleKernel.coboundary(f, class_depth=f.depth)
        targets = target_set(model, inp.candidate, triple.u_index)
        witness = validate_witness(kernel, triple.base(), targets, delta, mu,
                                   core, theta)
        if not witness.ok:
            fail(f"evc-{witness.clause}", where, witness.detail or "")

        f_prev, n = f, rec["refined_level"]
        functions.append(f)

    finals = [r for r in records if r.get("record") == "final"]
    if finals:
        if finals[0]["f"] != _function_table(functions[-1]):
            fail("final_function", "final",
                 "terminal table differs from the last round's function")

    closure = conjugate_closure(model, tuple(model.parse(x)
                                             for x in config.family))
    for rec in (r for r in records if r.get("record") == "boundedness"):
        action = config.build_action(config.rounds)
        ok = increments_within(functions[-1], action, closure).ok
        if rec["ok"] != ok or not ok:
            fail("boundedness", "terminal",
                 "recomputed compact-range certificate disagrees")

    for rec in (r for r in records if r.get("record") == "ladder"):
        kernel = CocycleKernel.coboundary(functions[-1],
                                          class_depth=functions[-1].depth)
        trivial = CocycleKernel.trivial(model, functions[-1].depth,
                                        functions[-1].depth)
        for depth, count, control in zip(rec["rung_depths"], rec["components"],
                                         rec["control_components"]):
            if skew_connectivity(kernel, depth=depth).components != count:
                fail("ladder", f"depth {depth}", "component count mismatch")
            if skew_connectivity(trivial, depth=depth).components != control:
                fail("ladder_control", f"depth {depth}", "control mismatch")
    return failures


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

def function_csv(f: StepFunction) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["word", "value"])
    for w, v in sorted(f.table.items()):
        writer.writerow([w, f.model.format(v)])
    return buf.getvalue()


def set_csv(s: CylinderSet, mu: ProductMeasure) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["word", "depth", "mass_numerator", "mass_denominator"])
    for w in s.words:
        m = mu.cylinder(w)
        writer.writerow([w, len(w), m.numerator, m.denominator])
    return buf.getvalue()


def export_report(records: Sequence[dict], out_dir: str,
                  kernel_guard: int = 12) -> list[str]:
    """Write CSV artifacts for a stored report; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    headers = [r for r in records if r.get("record") == "header"]
    if not headers:
        raise ConfigError("report has no header record")
    config = PipelineConfig.from_mapping(headers[0]["config"])
    model = config.build_model()
    mu = config.build_measure()
    written: list[str] = []

    def emit(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)

    finals = [r for r in records if r.get("record") == "final"]
    if finals:
        f = StepFunction(model, finals[0]["depth"],
                         {w: model.parse(v) for w, v in finals[0]["f"].items()})
        emit("final_function.csv", function_csv(f))
        if f.depth <= kernel_guard:
            kernel = CocycleKernel.coboundary(f, class_depth=f.depth)
            emit("terminal_kernel.csv", kernel.to_csv(kernel_guard))
    for rec in (r for r in records if r.get("record") == "round"):
        core = CylinderSet.of(rec["witness"]["core"])
        emit(f"round_{rec['round']:02d}_core.csv", set_csv(core, mu))
    ladders = [r for r in records if r.get("record") == "ladder"]
    if ladders:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["depth", "components", "control_components"])
        for row in zip(ladders[0]["rung_depths"], ladders[0]["components"],
                       ladders[0]["control_components"]):
            writer.writerow(row)
        emit("ladder.csv", buf.getvalue())
    return written
