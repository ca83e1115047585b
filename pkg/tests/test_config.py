import pytest

from unsupseg.config import RunConfig, build_config, parse_config_file


class TestConfigFile:
    def test_parse_flat_key_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("mu = 2.5\niters=50\n# comment line\n\ntv_bounds=paper\n")
        values = parse_config_file(path)
        assert values == {"mu": 2.5, "iters": 50, "tv_bounds": "paper"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("learning_rate=0.1\n")
        with pytest.raises(ValueError, match="learning_rate"):
            parse_config_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("iters=ten\n")
        with pytest.raises(ValueError, match="iters"):
            parse_config_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ValueError):
            parse_config_file(path)


class TestThreeLayerPrecedence:
    def test_flag_beats_file_beats_default(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("mu=2.0\nlr=0.05\n")
        cfg = build_config(path, {"mu": 7.0})
        assert cfg.mu == 7.0  # flag wins
        assert cfg.lr == 0.05  # file beats default
        assert cfg.momentum == 0.9  # untouched default

    def test_none_overrides_ignored(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("mu=2.0\n")
        cfg = build_config(path, {"mu": None, "lr": None})
        assert cfg.mu == 2.0

    def test_defaults_match_reference_setup(self):
        cfg = RunConfig()
        assert (cfg.layers, cfg.p, cfg.q) == (3, 100, 100)
        assert (cfg.lr, cfg.momentum, cfg.mu, cfg.nu) == (0.1, 0.9, 5.0, 0.5)
        assert (cfg.k, cfg.window) == (17, 5)
        assert (cfg.tau, cfg.sigma, cfg.min_size) == (500.0, 1.0, 0)
        assert cfg.threshold_list() == [0.2, 0.3, 0.4, 0.5, 0.6, 0.7]

    def test_hyperparams_mapping(self):
        cfg = build_config(None, {"p": 8, "q": 6, "layers": 2, "min_labels": 2})
        hp = cfg.hyperparams()
        assert hp.feat_dim == 8
        assert hp.max_labels == 6
        assert hp.layers == 2

    def test_threshold_list_parsing(self):
        cfg = build_config(None, {"pr_thresholds": "0.25,0.5"})
        assert cfg.threshold_list() == [0.25, 0.5]
        cfg_bad = build_config(None, {"pr_thresholds": "a,b"})
        with pytest.raises(ValueError):
            cfg_bad.threshold_list()
