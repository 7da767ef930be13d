import json

import pytest

from appendix_tables import SIZE_PRIOR_TABLE
from pseudolabel3d.priors import (
    DEFAULT_SIZE_PRIORS,
    SizePrior,
    canonical_class_name,
    load_size_priors,
    parse_size_priors,
    size_priors_document,
)


def test_bundled_table_matches_appendix_verbatim():
    assert len(DEFAULT_SIZE_PRIORS) == len(SIZE_PRIOR_TABLE)
    for prior, (name, w, l, h) in zip(DEFAULT_SIZE_PRIORS, SIZE_PRIOR_TABLE):
        assert prior.display_name == name
        assert prior.class_name == canonical_class_name(name)
        assert prior.dims == (w, l, h)


def test_canonical_names():
    assert canonical_class_name("Construction Vehicle") == "construction_vehicle"
    assert canonical_class_name(" traffic-cone ") == "traffic_cone"
    assert canonical_class_name("car") == "car"


def test_round_trip_through_document(tmp_path):
    path = tmp_path / "priors.json"
    path.write_text(json.dumps(size_priors_document(DEFAULT_SIZE_PRIORS)))
    assert tuple(load_size_priors(path)) == DEFAULT_SIZE_PRIORS


def test_rejects_bad_tables():
    with pytest.raises(ValueError):
        parse_size_priors({"format_version": 2, "priors": []})
    dup = {"class_name": "car", "width": 1, "length": 2, "height": 1}
    with pytest.raises(ValueError):
        parse_size_priors({"format_version": 1, "priors": [dup, dup]})
    with pytest.raises(ValueError):
        SizePrior("x", 0.0, 1.0, 1.0)
