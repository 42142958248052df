import json

import pytest

from shutdownscope.config import Config, config_from_dict, load_config


def test_defaults():
    cfg = load_config(None)
    assert cfg.probe.ports == (80, 443, 179)
    assert cfg.coverage.withdrawal_threshold_pp == -5.0
    assert cfg.registry.statuses == ("allocated", "assigned")


def test_lists_become_tuples_and_digest_is_stable(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"_comment": "x", "probe": {"ports": [80, 443], "rate": 5}}))
    a, b = load_config(path), load_config(path)
    assert a.probe.ports == (80, 443)
    assert a.digest() == b.digest() != Config().digest()


@pytest.mark.parametrize("doc", [{"nope": {}}, {"probe": {"colour": 1}}, {"probe": []}])
def test_rejects(doc):
    with pytest.raises(ValueError):
        config_from_dict(doc)


def test_bundle_config_loads(bundle):
    cfg = load_config(bundle / "config.json")
    assert [e["name"] for e in cfg.passive.events] == ["E1", "E2"]
    assert cfg.ascomp.floor_date == "2026-03-15"
