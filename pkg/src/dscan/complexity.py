"""Per-layer MACs and parameter counting for the autoencoder architecture.

Counting conventions (also emitted in every report):
  - standard / transposed convolution: MACs = w*h*C_in*C_out*k^2 evaluated at
    the layer's output spatial size; params = k^2*C_in*C_out (biases excluded)
  - depthwise-separable unit (depthwise + pointwise): MACs = w*h*C_in*(k^2+C_out);
    params = C_in*(k^2+C_out)
  - fully-connected: MACs = params = D_in*D_out
  - batch norm: 0 MACs, 2*C params; activations and reshapes are free
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .errors import ConfigurationError

CONVENTIONS = (
    "MACs: conv/tconv = w*h*Cin*Cout*k^2 at output size; dsc = w*h*Cin*(k^2+Cout); "
    "fc = Din*Dout; bn = 0. Params: conv/tconv = k^2*Cin*Cout (no biases); "
    "dsc = Cin*(k^2+Cout); fc = Din*Dout; bn = 2C. Activations/reshapes free."
)


@dataclass
class LayerSpec:
    """One counted unit of the architecture."""

    name: str
    kind: str            # conv | tconv | dsc | fc | bn
    kernel: int = 0
    stride: int = 1
    c_in: int = 0
    c_out: int = 0
    out_h: int = 0
    out_w: int = 0
    d_in: int = 0
    d_out: int = 0
    residual: bool = False


@dataclass
class ArchitectureSpec:
    layers: list
    embedding_dim: int = 10
    decoder_fc_width: int = 2560
    decoder_reshape: tuple = (4, 5, 128)

    def validate(self):
        h, w, c = self.decoder_reshape
        if self.decoder_fc_width != h * w * c:
            raise ConfigurationError(
                f"decoder FC width {self.decoder_fc_width} != product of reshape "
                f"{self.decoder_reshape}")
        for layer in self.layers:
            if layer.kind not in ("conv", "tconv", "dsc", "fc", "bn"):
                raise ConfigurationError(f"unknown layer kind {layer.kind!r} in {layer.name}")
        return True

    def to_json_dict(self):
        return {
            "layers": [asdict(l) for l in self.layers],
            "embedding_dim": self.embedding_dim,
            "decoder_fc_width": self.decoder_fc_width,
            "decoder_reshape": list(self.decoder_reshape),
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(layers=[LayerSpec(**l) for l in data["layers"]],
                   embedding_dim=data["embedding_dim"],
                   decoder_fc_width=data["decoder_fc_width"],
                   decoder_reshape=tuple(data["decoder_reshape"]))


def layer_complexity(layer):
    """(MACs, params) of one layer under the documented conventions."""
    k2 = layer.kernel * layer.kernel
    if layer.kind in ("conv", "tconv"):
        macs = layer.out_h * layer.out_w * layer.c_in * layer.c_out * k2
        params = k2 * layer.c_in * layer.c_out
    elif layer.kind == "dsc":
        macs = layer.out_h * layer.out_w * layer.c_in * (k2 + layer.c_out)
        params = layer.c_in * (k2 + layer.c_out)
    elif layer.kind == "fc":
        macs = layer.d_in * layer.d_out
        params = layer.d_in * layer.d_out
    elif layer.kind == "bn":
        macs = 0
        params = 2 * layer.c_out
    else:
        raise ConfigurationError(f"unknown layer kind {layer.kind!r}")
    return int(macs), int(params)


@dataclass
class ComplexityReport:
    layers: list = field(default_factory=list)   # {name, kind, macs, params}
    total_macs: int = 0
    total_params: int = 0
    conventions: str = CONVENTIONS

    def to_json_dict(self):
        return {
            "conventions": self.conventions,
            "layers": self.layers,
            "total_macs": self.total_macs,
            "total_params": self.total_params,
            "total_macs_k": round(self.total_macs / 1000.0, 1),
            "total_params_k": round(self.total_params / 1000.0, 1),
        }


def analyze_complexity(spec):
    """Sum per-layer MACs/params over an ArchitectureSpec."""
    spec.validate()
    report = ComplexityReport()
    for layer in spec.layers:
        macs, params = layer_complexity(layer)
        report.layers.append({"name": layer.name, "kind": layer.kind,
                              "macs": macs, "params": params})
        report.total_macs += macs
        report.total_params += params
    return report


def dsc_reduction_ratio(k, c_out):
    """Standard-conv MACs over DSC MACs at equal shape: k^2*C_out/(k^2+C_out)."""
    return (k * k * c_out) / (k * k + c_out)
