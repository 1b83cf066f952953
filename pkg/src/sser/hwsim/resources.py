"""State-memory and multiplier sizing for a per-layer datapath."""
from dataclasses import dataclass

from ..exceptions import ConfigurationError

GATE_BLOCKS = {"gru": 3, "mgu": 2}

# Post-implementation hardware figures reported for a
# single 12-channel 8-bit layer with a 128x128 state memory. They are reported
# values carried for comparison in reports; nothing here derives them.
REPORTED_FPGA = {
    "source": "reported (external synthesis results, not computed)",
    "platform": "ZCU104",
    "rows": [
        {"clock_mhz": 100, "model": "GRU", "lut": 26744, "ff": 5082, "bram": 0, "dsp": 108,
         "static_w": 0.599, "dynamic_w": 1.344, "latency_ns": 160},
        {"clock_mhz": 100, "model": "GRU memory", "lut": 25862, "ff": 0, "bram": 48, "dsp": 0},
        {"clock_mhz": 100, "model": "MGU", "lut": 19156, "ff": 3677, "bram": 0, "dsp": 108,
         "static_w": 0.597, "dynamic_w": 1.007, "latency_ns": 160},
        {"clock_mhz": 100, "model": "MGU memory", "lut": 17115, "ff": 0, "bram": 48, "dsp": 0},
        {"clock_mhz": 200, "model": "GRU", "lut": 27441, "ff": 5082, "bram": 0, "dsp": 108,
         "static_w": 0.607, "dynamic_w": 2.729, "latency_ns": 80},
        {"clock_mhz": 200, "model": "GRU memory", "lut": 27745, "ff": 0, "bram": 48, "dsp": 0},
        {"clock_mhz": 200, "model": "MGU", "lut": 19156, "ff": 3677, "bram": 0, "dsp": 108,
         "static_w": 0.603, "dynamic_w": 1.986, "latency_ns": 80},
        {"clock_mhz": 200, "model": "MGU memory", "lut": 17115, "ff": 0, "bram": 48, "dsp": 0},
    ],
    # detection accuracy is likewise out of reach without the full datasets
    "not_reproduced": ["detection mAP tables", "FPGA power / LUT / FF / DSP"],
}


@dataclass(frozen=True)
class LayerResources:
    d_in: int
    d_out: int
    gate_height: int
    multipliers: int
    memory_bits: int


@dataclass(frozen=True)
class ResourceEstimate:
    kind: str
    precision: int
    width: int
    height: int
    layers: tuple

    @property
    def memory_bits(self):
        return sum(l.memory_bits for l in self.layers)

    @property
    def bits_per_precision_bit(self):
        """State bits saved by dropping one bit of precision."""
        return sum(self.width * self.height * l.d_out for l in self.layers)

    def to_dict(self, reported=True):
        d = {
            "kind": self.kind,
            "precision_bits": self.precision,
            "sensor": [self.width, self.height],
            "layers": [l.__dict__ for l in self.layers],
            "memory_bits": self.memory_bits,
            "memory_bytes": self.memory_bits // 8 if self.memory_bits % 8 == 0 else self.memory_bits / 8,
            "bits_saved_per_precision_bit": self.bits_per_precision_bit,
        }
        if reported:
            d["reported_constants"] = REPORTED_FPGA
        return d


def estimate_resources(dims, kind="gru", precision=8, width=128, height=128, d_in=2):
    """Exact per-layer sizing: memory ``W*H*d_out*precision`` bits,
    gate block height ``3*d_out`` (GRU) or ``2*d_out`` (MGU) and
    ``(d_in + d_out) * gate_height`` multipliers."""
    if kind not in GATE_BLOCKS:
        raise ConfigurationError(f"kind must be gru or mgu, got {kind!r}")
    if precision < 1 or width < 1 or height < 1 or d_in < 1:
        raise ConfigurationError("precision, sensor size and d_in must be positive")
    layers = []
    for d_out in dims:
        d_out = int(d_out)
        if d_out < 1:
            raise ConfigurationError("layer widths must be positive")
        gh = GATE_BLOCKS[kind] * d_out
        layers.append(LayerResources(d_in, d_out, gh, (d_in + d_out) * gh, width * height * d_out * precision))
        d_in = d_out
    return ResourceEstimate(kind, int(precision), int(width), int(height), tuple(layers))
