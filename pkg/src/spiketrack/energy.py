"""Theoretical per-inference energy from synaptic-operation counts.

Spiking layers do accumulate-only work: SOPs = input rate * time steps * the
layer's dense-MAC-equivalent count, each at e_ac joules. Analog-input layers
(and the all-MAC reference network) pay e_mac per dense MAC. Defaults are the
common 45 nm figures; override through the energy config section.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .nn.layers import EnergyEntry

E_MAC_DEFAULT = 4.6e-12  # joules per multiply-accumulate
E_AC_DEFAULT = 0.9e-12  # joules per accumulate


class EnergyError(ValueError):
    pass


@dataclass
class LayerOpsSpec:
    """Static dense-MAC cost of one contraction plus whether spikes drive it."""

    name: str
    mac_equivalent_ops: int
    is_spiking: bool

    def __post_init__(self):
        if self.mac_equivalent_ops < 0:
            raise EnergyError(f"{self.name}: negative op count")


@dataclass
class LayerEnergy:
    name: str
    is_spiking: bool
    mac_equivalent_ops: int
    firing_rate: float
    sops: float
    joules: float


@dataclass
class EnergyProfile:
    layers: list[LayerEnergy]
    snn_joules: float
    ann_joules: float
    e_mac: float
    e_ac: float
    t_max: int

    def to_dict(self) -> dict:
        return {
            "constants": {"e_mac": self.e_mac, "e_ac": self.e_ac, "t_max": self.t_max},
            "layers": [
                {
                    "name": l.name,
                    "is_spiking": l.is_spiking,
                    "mac_equivalent_ops": l.mac_equivalent_ops,
                    "firing_rate": l.firing_rate,
                    "sops": l.sops,
                    "joules": l.joules,
                }
                for l in self.layers
            ],
            "totals": {"snn_joules": self.snn_joules, "ann_joules": self.ann_joules},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def count_ops(entries: list[EnergyEntry]) -> list[LayerOpsSpec]:
    """Static op specs from a model's measured contraction inventory."""
    return [
        LayerOpsSpec(e.name, e.macs_per_sample, e.is_spiking) for e in entries
    ]


def estimate_energy(
    specs: list[LayerOpsSpec],
    firing_rates: dict[str, float],
    t_max: int,
    e_mac: float = E_MAC_DEFAULT,
    e_ac: float = E_AC_DEFAULT,
) -> EnergyProfile:
    """Fold measured input firing rates into per-layer and total joules.

    Spiking layers: rate * t_max * ops * e_ac. Analog-input layers: ops * e_mac.
    The ANN reference total treats every layer as dense MACs.
    """
    layers: list[LayerEnergy] = []
    snn_total = 0.0
    ann_total = 0.0
    for spec in specs:
        if spec.is_spiking:
            rate = firing_rates.get(spec.name)
            if rate is None:
                raise EnergyError(f"no firing rate for spiking layer {spec.name!r}")
            if not 0.0 <= rate <= 1.0:
                raise EnergyError(f"{spec.name}: firing rate {rate} outside [0, 1]")
            sops = rate * t_max * spec.mac_equivalent_ops
            joules = sops * e_ac
        else:
            rate = 1.0
            sops = float(spec.mac_equivalent_ops)
            joules = spec.mac_equivalent_ops * e_mac
        layers.append(
            LayerEnergy(
                name=spec.name,
                is_spiking=spec.is_spiking,
                mac_equivalent_ops=spec.mac_equivalent_ops,
                firing_rate=rate,
                sops=sops,
                joules=joules,
            )
        )
        snn_total += joules
        ann_total += spec.mac_equivalent_ops * e_mac
    return EnergyProfile(
        layers=layers,
        snn_joules=snn_total,
        ann_joules=ann_total,
        e_mac=e_mac,
        e_ac=e_ac,
        t_max=t_max,
    )


def profile_model(model, images, layout: str, e_mac: float = E_MAC_DEFAULT, e_ac: float = E_AC_DEFAULT) -> EnergyProfile:
    """Run one batch through the model and report per-inference energy."""
    from .autodiff import no_grad

    model.eval()
    with no_grad():
        model.forward_maps(images, layout)
    entries = model.inference_energy_entries()
    specs = count_ops(entries)
    rates = {e.name: e.input_rate for e in entries}
    return estimate_energy(specs, rates, model.cfg.t_max, e_mac=e_mac, e_ac=e_ac)
