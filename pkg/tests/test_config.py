"""Configuration parsing, defaults, and topology validation."""

import json

import pytest

from tracesim.config import parse_config, validate_topology
from tracesim.errors import ConfigError, ConfigWarning
from tracesim.machine import Machine


class TestDefaults:
    def test_empty_doc_is_default_machine(self):
        cfg = parse_config("{}")
        assert cfg.num_cores == 1 and len(cfg.cores) == 1
        core = cfg.cores[0]
        assert core.frequency == 4000
        assert (core.rob_size, core.lq_size, core.sq_size) == (256, 72, 56)
        assert core.fetch_width == core.retire_width == 4
        assert core.mispredict_penalty == 20
        l1d = cfg.node("cpu0_L1D")
        assert l1d.sets * l1d.ways * l1d.block_size == 32 * 1024
        assert l1d.hit_latency == 4
        assert cfg.node("cpu0_L2").hit_latency == 10
        llc = cfg.node("LLC")
        assert llc.sets * llc.ways * llc.block_size == 2 * 1024 * 1024
        stlb = cfg.node("cpu0_STLB")
        assert stlb.kind == "tlb" and stlb.sets * stlb.ways == 1536
        assert stlb.block_size == cfg.page_size == 4096
        assert cfg.dram.banks_per_rank == 8 and cfg.dram.tCAS == 24
        assert cfg.pt_levels == 4

    def test_two_cores_share_one_llc(self):
        cfg = parse_config('{"num_cores": 2}')
        assert len(cfg.cores) == 2
        assert cfg.cores[0].rob_size == cfg.cores[1].rob_size
        assert cfg.node("cpu0_L2").lower_level == "LLC"
        assert cfg.node("cpu1_L2").lower_level == "LLC"
        assert cfg.node("LLC").sets == 4096  # 2 MiB per core

    def test_core_override_and_heterogeneity(self):
        cfg = parse_config('{"cores": [{"rob_size": 8}, {}]}')
        assert cfg.num_cores == 2
        assert cfg.cores[0].rob_size == 8
        assert cfg.cores[1].rob_size == 256

    def test_node_override_merges_with_default(self):
        cfg = parse_config('{"cache_nodes": [{"name": "LLC", "ways": 4}]}')
        llc = cfg.node("LLC")
        assert llc.ways == 4
        assert llc.hit_latency == 20  # untouched default


class TestParseErrors:
    def test_invariant_violation_names_key(self):
        with pytest.raises(ConfigError, match="rob_size"):
            parse_config('{"cores": [{"rob_size": 0}]}')

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError, match="lq_size"):
            parse_config('{"cores": [{"lq_size": "huge"}]}')

    def test_malformed_json_reports_location(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config('{"num_cores": }')

    def test_unknown_key_warns(self):
        with pytest.warns(ConfigWarning, match="frobnicate"):
            parse_config('{"frobnicate": 1}')
        with pytest.warns(ConfigWarning, match="colour"):
            parse_config('{"cores": [{"colour": 3}]}')

    def test_block_size_power_of_two(self):
        with pytest.raises(ConfigError, match="block_size"):
            parse_config('{"cache_nodes": [{"name": "cpu0_L1D", "block_size": 48}]}')

    def test_dram_geometry_power_of_two(self):
        with pytest.raises(ConfigError, match="banks_per_rank"):
            parse_config('{"dram": {"banks_per_rank": 6}}')

    def test_core_trace_count_invariant(self):
        with pytest.raises(ConfigError, match="num_cores"):
            parse_config('{"num_cores": 2, "cores": [{}]}')


class TestSerialization:
    def test_parse_serialize_parse_is_fixed_point(self):
        for doc in ("{}", '{"num_cores": 2}',
                    '{"cores": [{"rob_size": 17}], "dram": {"channels": 2}}'):
            first = parse_config(doc)
            second = parse_config(json.dumps(first.to_json_dict()))
            assert first == second
            third = parse_config(json.dumps(second.to_json_dict()))
            assert second == third


class TestTopology:
    def test_default_two_core_topology_valid(self):
        cfg = parse_config('{"num_cores": 2}')
        topo = validate_topology(cfg)
        assert set(topo.nodes) == {n.name for n in cfg.cache_nodes}
        # upper levels come before their lower levels
        order = topo.order
        assert order.index("cpu0_L1D") < order.index("cpu0_L2")
        assert order.index("cpu0_L2") < order.index("LLC")

    def test_tlb_chain_must_sink_at_ptw(self):
        cfg = parse_config(
            '{"cache_nodes": [{"name": "cpu0_DTLB", "lower_level": "dram"}]}')
        with pytest.raises(ConfigError, match="PTW"):
            validate_topology(cfg)

    def test_cache_chain_must_sink_at_dram(self):
        cfg = parse_config(
            '{"cache_nodes": [{"name": "cpu0_L2", "lower_level": "ptw"}]}')
        with pytest.raises(ConfigError, match="physical memory"):
            validate_topology(cfg)

    def test_cycle_detected(self):
        cfg = parse_config(json.dumps({"cache_nodes": [
            {"name": "cpu0_L2", "lower_level": "X"},
            {"name": "X", "lower_level": "cpu0_L2"},
        ]}))
        with pytest.raises(ConfigError, match="cycle"):
            validate_topology(cfg)

    def test_dangling_node_name(self):
        cfg = parse_config(
            '{"cache_nodes": [{"name": "cpu0_L1D", "lower_level": "nowhere"}]}')
        with pytest.raises(ConfigError, match="nowhere"):
            validate_topology(cfg)

    def test_core_node_roles_checked(self):
        cfg = parse_config('{"cores": [{"l1d": "cpu0_DTLB"}]}')
        with pytest.raises(ConfigError, match="cache node"):
            validate_topology(cfg)

    def test_non_uniform_depths_accepted(self):
        # core1's chain skips the L2: L1 caches can sit at different depths
        doc = {
            "num_cores": 2,
            "cache_nodes": [
                {"name": "cpu1_L1D", "lower_level": "LLC"},
                {"name": "cpu1_L1I", "lower_level": "LLC"},
            ],
        }
        topo = validate_topology(parse_config(json.dumps(doc)))
        assert topo.nodes["cpu1_L1D"].lower_level == "LLC"
        assert topo.nodes["cpu0_L1D"].lower_level == "cpu0_L2"

    def test_shared_nodes_accepted(self):
        doc = {
            "num_cores": 2,
            "cores": [
                {"l1d": "L1D", "l1i": "L1I", "itlb": "ITLB", "dtlb": "DTLB"},
                {"l1d": "L1D", "l1i": "L1I", "itlb": "ITLB", "dtlb": "DTLB"},
            ],
            "cache_nodes": [
                {"name": "L1D", "lower_level": "LLC"},
                {"name": "L1I", "lower_level": "LLC"},
                {"name": "ITLB", "kind": "tlb", "lower_level": "STLB"},
                {"name": "DTLB", "kind": "tlb", "lower_level": "STLB"},
                {"name": "STLB", "kind": "tlb", "lower_level": "ptw"},
            ],
        }
        topo = validate_topology(parse_config(json.dumps(doc)))
        assert topo.nodes["L1D"].lower_level == "LLC"


class TestModuleBinding:
    def test_unknown_module_name_is_config_error(self):
        cfg = parse_config('{"cores": [{"branch_predictor": "nonesuch"}]}')
        with pytest.raises(ConfigError, match="nonesuch"):
            Machine(cfg)

    def test_unknown_prefetcher_is_config_error(self):
        cfg = parse_config(
            '{"cache_nodes": [{"name": "cpu0_L1D", "prefetcher": "warp"}]}')
        with pytest.raises(ConfigError, match="warp"):
            Machine(cfg)
