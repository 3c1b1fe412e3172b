"""End-to-end recursion runs: frozen profiles, report certification,
checkpoint recovery, and exports.

The six-round flip cascade is the workhorse; its tolerance chain and
level cascade are pinned against closed forms computed here.
"""
import copy
import csv
import io
import json
import os
from fractions import Fraction

import pytest

import cocyclelab.driver as driver
from cocyclelab.driver import (PRESETS, PipelineConfig, RunReport, Schedule,
                               bounded_cocycle_pipeline, certify_report,
                               export_report, load_report,
                               norm_bounded_pipeline, run_theorem_02i,
                               run_theorem_02ii)
from cocyclelab.errors import ConfigError
from cocyclelab.odometer import adding_machine_action, flip_action


def preset(name: str, **overrides) -> PipelineConfig:
    raw = dict(PRESETS[name])
    raw.update(overrides)
    return PipelineConfig.from_mapping(raw)


@pytest.fixture(scope="module")
def flips_run():
    return run_theorem_02i(preset("z2-flips"))


class TestConfig:
    def test_mapping_round_trip(self):
        config = preset("z2-flips")
        again = PipelineConfig.from_mapping(config.to_mapping())
        assert again == config
        assert again.digest() == config.digest()

    def test_missing_key(self):
        raw = dict(PRESETS["z2-flips"])
        del raw["group"]
        with pytest.raises(ConfigError):
            PipelineConfig.from_mapping(raw)

    def test_digest_ignores_mapping_order(self):
        raw = dict(PRESETS["z2-flips"])
        reordered = dict(reversed(list(raw.items())))
        assert (PipelineConfig.from_mapping(raw).digest()
                == PipelineConfig.from_mapping(reordered).digest())

    def test_flip_stream_action_grows(self):
        config = preset("z2-flip-stream")
        assert config.enumerated
        assert config.build_action(1).labels() == ["s1"]
        assert config.build_action(3).labels() == ["s1", "s2", "s3"]

    def test_fixed_action_is_round_independent(self):
        config = preset("z2-flips")
        assert not config.enumerated
        assert config.build_action(1) == config.build_action(5)


class TestSchedule:
    @staticmethod
    def walk_oracle(triples, count):
        """Concatenated prefixes of growing width, capped at the full
        list, repeated forever."""
        out = []
        width = 1
        while len(out) < count:
            out.extend(triples[:width])
            width = min(width + 1, len(triples))
        return out[:count]

    def test_prefix_block_walk(self):
        schedule = Schedule.from_config(preset("z2-flips"))
        assert len(schedule.triples) == 3
        expected = self.walk_oracle(schedule.triples, 20)
        assert [schedule.round_triple(i) for i in range(20)] == expected

    def test_every_triple_recurs(self):
        # next_occurrence is strictly after the given round index
        schedule = Schedule.from_config(preset("z2-flips"))
        walk = self.walk_oracle(schedule.triples, 40)
        for triple in schedule.triples:
            for after in (0, 6, 11):
                assert (schedule.next_occurrence(triple, after)
                        == walk.index(triple, after + 1))

    def test_recurrence_record(self, flips_run):
        _, report = flips_run
        record = report.by_kind("recurrence")[0]
        assert record["executed"] == 6
        assert record["next_occurrence"] == {
            "(X, 1, U1)": 6, "(0, 1, U1)": 7, "(1, 1, U1)": 8}

    def test_triples_cover_all_combinations(self):
        schedule = Schedule.from_config(preset("z2-flip-stream"))
        labels = {t.label() for t in schedule.triples}
        assert labels == {"(X, 1, U1)", "(0, 1, U1)"}


class TestFlipCascade:
    def test_level_cascade(self, flips_run):
        _, report = flips_run
        rounds = report.by_kind("round")
        assert [r["refined_level"] for r in rounds] == [2, 3, 4, 5, 6, 7]
        assert [r["working_depth"] for r in rounds] == [3, 4, 5, 6, 7, 8]
        assert all(r["working_depth"] <= 14 for r in rounds)

    def test_eps_chain_closed_form(self, flips_run):
        # nothing binds except the previous tolerance, so each round
        # shrinks by exactly 7/16
        _, report = flips_run
        got = [Fraction(r["eps"]) for r in report.by_kind("round")]
        expected = [Fraction(1, 40) * Fraction(7, 16) ** k for k in range(6)]
        assert got == expected
        assert all(b < a / 2 for a, b in zip(got, got[1:]))
        assert sum(got) < 2 * got[0]

    def test_round_conditions(self, flips_run):
        _, report = flips_run
        for r in report.by_kind("round"):
            cond = r["conditions"]
            assert cond["inner"] and cond["incremental"]
            assert cond["agreement_ok"] and cond["distance_ok"]
            assert cond["evc_witness_ok"] and cond["evc_search"]["ok"]
            assert all(c["ok"] for c in r["validator"])

    def test_ladder_reaches_one(self, flips_run):
        approx, report = flips_run
        ladder = report.by_kind("ladder")[0]
        assert ladder["rung_depths"] == list(range(1, 8))
        assert ladder["components"] == [1] * 7
        assert ladder["control_components"] == [2] * 7
        assert ladder["nonincreasing"] and ladder["control_constant"]
        assert ladder["terminal_components"] == 1
        assert approx.function.depth == ladder["kernel_depth"] == 8

    def test_boundedness(self, flips_run):
        _, report = flips_run
        bound = report.by_kind("boundedness")[0]
        assert bound["ok"] and bound["closure"] == ["1"]
        assert set(bound["per_generator"]) == {"s1", "s2"}

    def test_stabilization_ledger(self, flips_run):
        _, report = flips_run
        ledger = report.by_kind("stabilization")[0]["ledger"]
        assert set(ledger) == {"s1", "s2"}
        for rows in ledger.values():
            assert [r["after_round"] for r in rows] == list(range(6))
            assert all(r["ok"] for r in rows)

    def test_distances(self, flips_run):
        _, report = flips_run
        rows = report.by_kind("distances")[0]["rows"]
        assert len(rows) == 6
        assert all(r["ok"] for r in rows)

    def test_final_record(self, flips_run):
        approx, report = flips_run
        final = report.by_kind("final")[0]
        assert final["depth"] == 8
        assert final["halving_ok"]
        assert Fraction(final["tail_bound"]) == approx.tail_bound
        assert approx.rounds == 6

    def test_certify_clean(self, flips_run):
        _, report = flips_run
        assert certify_report(report.records) == []


class TestAddingRoundProfile:
    def test_frozen_numbers(self):
        # one full adding-machine round; the update genuinely moves the
        # increments, unlike the shallow-flip cascade
        _, report = run_theorem_02i(preset("z2-adding"))
        r = report.by_kind("round")[0]
        assert r["refined_level"] == 9
        assert r["working_depth"] == 10
        assert r["conditions"]["agreement"] == "2039/2048"
        assert r["conditions"]["distance"] == "27/16384"
        assert Fraction(r["artifacts"]["core_mass"]) == Fraction(127, 256)
        assert all(c["ok"] for c in r["validator"])
        ledger = report.by_kind("stabilization")[0]["ledger"]
        assert set(ledger) == {"T+T~"}
        assert certify_report(report.records) == []


@pytest.fixture(scope="module")
def stream_run():
    return run_theorem_02ii(preset("z2-flip-stream"))


class TestStreamRun:
    def test_gates(self):
        with pytest.raises(ConfigError):
            run_theorem_02ii(preset("z2-flips"))
        with pytest.raises(ConfigError):
            run_theorem_02i(preset("z2-flip-stream"))

    def test_value_bounds_per_generator(self, stream_run):
        _, report = stream_run
        record = report.by_kind("stream_bounds")[0]
        assert record["ok"]
        rows = record["rows"]
        assert [r["generator"] for r in rows] == ["s1", "s2", "s3", "s4"]
        assert all(r["k_size_bound_ok"] for r in rows)
        assert all(r["k_size"] <= r["f_values"] ** 2 for r in rows)

    def test_late_generators_see_changes(self, stream_run):
        # s3 and s4 reach coordinates modified in earlier rounds, so
        # their increments are nontrivial; realized values are listed as
        # group keys
        _, report = stream_run
        rows = report.by_kind("stream_bounds")[0]["rows"]
        by_gen = {r["generator"]: r["realized"] for r in rows}
        assert by_gen["s1"] == ["(0,)"] and by_gen["s2"] == ["(0,)"]
        assert by_gen["s3"] == ["(1,)"] and by_gen["s4"] == ["(1,)"]

    def test_certify_clean(self, stream_run):
        _, report = stream_run
        assert certify_report(report.records) == []


class TestGeneratorGroups:
    def test_adding_machine_pairs(self):
        groups = driver._generator_groups(adding_machine_action(5))
        assert [labels for labels, _ in groups] == [("T", "T~")]

    def test_flips_stay_single(self):
        groups = driver._generator_groups(flip_action((1, 2)))
        assert [labels for labels, _ in groups] == [("s1",), ("s2",)]


class TestZeroRounds:
    def test_trivial_terminal(self):
        approx, report = run_theorem_02i(preset("z2-flips", rounds=0))
        assert approx.rounds == 0
        assert set(approx.function.value_set()) == {0}
        ladder = report.by_kind("ladder")[0]
        assert ladder["rung_depths"] == [1]
        assert ladder["components"] == [2]
        assert ladder["terminal_components"] == 2
        assert report.by_kind("final")[0]["eps_history"] == []
        assert certify_report(report.records) == []


class TestDeterminism:
    def test_reports_byte_identical(self, flips_run):
        _, first = flips_run
        _, second = run_theorem_02i(preset("z2-flips"))
        assert first.text() == second.text()

    def test_header_digest_matches_config(self, flips_run):
        _, report = flips_run
        header = report.by_kind("header")[0]
        assert header["config_digest"] == preset("z2-flips").digest()


class TestCertifyTampering:
    @staticmethod
    def tampered(report: RunReport, mutate) -> list[dict]:
        records = [copy.deepcopy(r) for r in report.records]
        mutate(records)
        return certify_report(records)

    @staticmethod
    def clauses(failures):
        return {f["clause"] for f in failures}

    def test_eps_inflation(self, flips_run):
        _, report = flips_run
        def bump(records):
            rounds = [r for r in records if r["record"] == "round"]
            rounds[2]["eps"] = rounds[1]["eps"]
        assert "eps_halving" in self.clauses(self.tampered(report, bump))

    def test_function_table_forgery(self, flips_run):
        _, report = flips_run
        def flip_value(records):
            rounds = [r for r in records if r["record"] == "round"]
            table = rounds[-1]["artifacts"]["f"]
            word = sorted(table)[0]
            table[word] = "1" if table[word] == "0" else "0"
        failures = self.tampered(report, flip_value)
        assert failures
        assert self.clauses(failures) & {"inner", "agreement", "distance",
                                         "final_function", "evc-membership"}

    def test_core_padding(self, flips_run):
        _, report = flips_run
        def pad(records):
            rounds = [r for r in records if r["record"] == "round"]
            witness = rounds[0]["witness"]
            image = {img for _, img in witness["moves"]}
            extra = next(w for w in witness["core"] if w)
            witness["core"] = sorted(set(witness["core"]) | image | {extra})
        failures = self.tampered(report, pad)
        assert self.clauses(failures) & {"core_disjoint", "evc-part-inside",
                                         "validator"}

    def test_schedule_swap(self, flips_run):
        _, report = flips_run
        def swap(records):
            rounds = [r for r in records if r["record"] == "round"]
            rounds[0]["triple"]["u_index"] = 0
        assert "schedule" in self.clauses(self.tampered(report, swap))

    def test_digest_mismatch(self, flips_run):
        _, report = flips_run
        def corrupt(records):
            records[0]["config_digest"] = "0" * 64
        assert "config_digest" in self.clauses(self.tampered(report, corrupt))


class TestCheckpoints:
    def test_fresh_run_writes_checkpoint(self, tmp_path):
        out = str(tmp_path)
        _, report = run_theorem_02i(preset("z2-flips", rounds=2), out_dir=out)
        assert os.path.exists(os.path.join(out, "checkpoint.json"))
        # on-disk records equal the in-memory ones up to JSON canonical form
        assert (load_report(os.path.join(out, "report.jsonl"))
                == [json.loads(line) for line in report.lines()])

    def test_resume_from_complete_checkpoint(self, tmp_path):
        out = str(tmp_path)
        config = preset("z2-flips", rounds=3)
        _, first = run_theorem_02i(config, out_dir=out)
        _, second = run_theorem_02i(config, out_dir=out, resume=True)
        assert first.text() == second.text()

    def test_resume_after_crash(self, tmp_path, monkeypatch):
        out_crash = str(tmp_path / "crash")
        out_full = str(tmp_path / "full")
        config = preset("z2-flips")
        _, full = run_theorem_02i(config, out_dir=out_full)

        calls = {"n": 0}
        real = driver.construct_step

        def bomb(inp):
            calls["n"] += 1
            if calls["n"] > 3:
                raise RuntimeError("simulated crash")
            return real(inp)

        monkeypatch.setattr(driver, "construct_step", bomb)
        with pytest.raises(RuntimeError):
            run_theorem_02i(config, out_dir=out_crash)
        monkeypatch.setattr(driver, "construct_step", real)

        _, resumed = run_theorem_02i(config, out_dir=out_crash, resume=True)
        assert resumed.text() == full.text()

    def test_digest_mismatch_restarts(self, tmp_path):
        out = str(tmp_path)
        run_theorem_02i(preset("z2-flips", rounds=2), out_dir=out)
        _, report = run_theorem_02i(preset("z2-flips", rounds=3),
                                    out_dir=out, resume=True)
        assert len(report.by_kind("round")) == 3
        assert certify_report(report.records) == []


class TestBoundedPipelines:
    def test_compact_range(self):
        report = bounded_cocycle_pipeline(preset("z2-flips", rounds=2))
        record = report.by_kind("compact_range")[0]
        assert record["ok"]
        assert record["range_set"] == ["identity", "1"]
        assert record["rounds"] == 2

    def test_norm_bound_unit_family(self):
        report = norm_bounded_pipeline(preset("sum-z"))
        record = report.by_kind("norm_bounds")[0]
        assert record["ok"]
        assert record["sup_family_norm"] == "1"
        assert Fraction(record["max_c"]) <= 1

    def test_norm_bound_wide_family(self):
        report = norm_bounded_pipeline(preset("sum-z-wide"))
        record = report.by_kind("norm_bounds")[0]
        assert record["ok"]
        assert record["sup_family_norm"] == "5"


class TestExports:
    def test_export_files(self, tmp_path, flips_run):
        _, report = flips_run
        out = str(tmp_path)
        written = export_report(report.records, out)
        names = {os.path.basename(p) for p in written}
        assert "final_function.csv" in names
        assert "ladder.csv" in names
        assert "terminal_kernel.csv" in names
        assert {f"round_{i:02d}_core.csv" for i in range(1, 7)} <= names
        for path in written:
            assert os.path.exists(path)

    def test_final_function_csv_parses(self, tmp_path, flips_run):
        _, report = flips_run
        written = export_report(report.records, str(tmp_path))
        path = next(p for p in written
                    if p.endswith("final_function.csv"))
        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 2 ** 8
        assert {r["value"] for r in rows} <= {"0", "1"}
