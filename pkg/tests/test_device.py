"""Converter device models and the aggregated K_VSC."""

import json

import numpy as np
import pytest

from analysis.device import DeviceModel, aggregate_device, device_inverse, load_device
from core.errors import InputError
from core.ratlin import tm_eval
from core.types import ConverterState


def _entry(num, den):
    return {"num": [[c, 0.0] for c in num], "den": [[c, 0.0] for c in den]}


def _device(buses):
    return {
        "converters": [
            {
                "bus": bus,
                "J": [
                    [_entry([2.0 + k], [1.0, 0.1]), _entry([0.3], [1.0])],
                    [_entry([-0.2], [1.0]), _entry([1.5], [2.0, 1.0])],
                ],
            }
            for k, bus in enumerate(buses)
        ]
    }


def _states(buses, bases):
    return [
        ConverterState(bus=b, U_pu=1.0, theta_rad=0.0, P_pu=1.0, Q_pu=0.0, S_B=s)
        for b, s in zip(buses, bases)
    ]


def test_inverse_undoes_aggregate():
    buses = ["node1", "node2"]
    device = DeviceModel.model_validate(_device(buses))
    states = _states(buses, [1.0, 2.5])
    s = complex(0.4, 3.0)
    J = tm_eval(aggregate_device(device, buses, states), s)
    K = tm_eval(device_inverse(device, buses, states), s)
    np.testing.assert_allclose(J @ K, np.eye(4), atol=1e-12)


def test_blocks_land_on_node_positions():
    buses = ["node1", "node2"]
    device = DeviceModel.model_validate(_device(buses))
    J = tm_eval(aggregate_device(device, buses, _states(buses, [1.0, 1.0])), 0.0)
    assert J[1, 3] == pytest.approx(0.3)
    assert J[3, 1] == pytest.approx(-0.2)
    assert J[0, 1] == 0 and J[0, 3] == 0


def test_device_json_file(tmp_path):
    path = tmp_path / "device.json"
    path.write_text(json.dumps(_device(["a"])))
    assert load_device(path).converters[0].bus == "a"


def test_missing_converter_rejected():
    device = DeviceModel.model_validate(_device(["node1"]))
    with pytest.raises(InputError):
        device.for_nodes(["node1", "node2"])


def test_device_block_must_be_square():
    bad = _device(["node1"])
    bad["converters"][0]["J"] = bad["converters"][0]["J"][:1]
    with pytest.raises(ValueError):
        DeviceModel.model_validate(bad)
