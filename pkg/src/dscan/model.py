"""The autoencoder: stride-2 stem conv, five DSC blocks and a small FC head
down to a 10-dim embedding; FC back up to a 4x5x128 map, five stride-2
transposed-conv blocks and a 5x5 transposed conv back to 128x156.

Every DSC block is 1x1 conv -> BN/ReLU -> 3x3 depthwise (carries the block
stride) -> BN/ReLU -> 1x1 pointwise -> BN/ReLU, summed with a 1x1 strided
projection of the block input (identity when shapes already agree). Each
transposed block is a 3x3 stride-2 transposed conv -> BN/ReLU summed with a
2x2 stride-2 transposed-conv projection of its input.

Channel schedule (encoder 32-24-32-48-64-64, decoder 128-8-8-8-4-4) is
chosen to land the total parameter count near 72K; see the complexity
module for the counting conventions.
"""

from __future__ import annotations

import numpy as np

from .complexity import ArchitectureSpec, LayerSpec
from .errors import DimensionError
from .ops import (
    BatchNormState,
    batch_norm,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    pointwise_conv2d,
    relu,
    transposed_conv2d,
)
from .tensor import Tensor, no_grad

INPUT_SHAPE = (128, 156, 1)
EMBEDDING_DIM = 10
STEM = {"kernel": 5, "stride": 2, "c_in": 1, "c_out": 32}
ENCODER_BLOCKS = [(32, 24, 2), (24, 32, 2), (32, 48, 2), (48, 64, 2), (64, 64, 1)]
HEAD_CHANNELS = 16
DECODER_FC_WIDTH = 2560
DECODER_RESHAPE = (4, 5, 128)
DECODER_BLOCKS = [(128, 8), (8, 8), (8, 8), (8, 4), (4, 4)]
DECODER_FINAL_KERNEL = 5


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class _Layer:
    """Named parameters plus optional batch-norm state."""

    def __init__(self, name):
        self.name = name
        self._params = []     # (local_name, Tensor)
        self._states = []     # (local_name, BatchNormState)

    def _add_param(self, local_name, tensor):
        self._params.append((local_name, tensor))
        return tensor

    def named_parameters(self):
        return [(f"{self.name}.{local}", t) for local, t in self._params]

    def named_states(self):
        return [(f"{self.name}.{local}", s) for local, s in self._states]


class Conv(_Layer):
    def __init__(self, name, rng, kernel, c_in, c_out, stride=1, padding="same", bias=False):
        super().__init__(name)
        self.stride, self.padding = stride, padding
        fan = kernel * kernel
        self.kernel = self._add_param("kernel", Tensor(
            _glorot(rng, (kernel, kernel, c_in, c_out), fan * c_in, fan * c_out),
            requires_grad=True))
        self.bias = self._add_param("bias", Tensor(
            np.zeros(c_out, dtype=np.float32), requires_grad=True)) if bias else None

    def __call__(self, x):
        return conv2d(x, self.kernel, self.bias, stride=self.stride, padding=self.padding)


class Pointwise(_Layer):
    def __init__(self, name, rng, c_in, c_out):
        super().__init__(name)
        self.kernel = self._add_param("kernel", Tensor(
            _glorot(rng, (1, 1, c_in, c_out), c_in, c_out), requires_grad=True))

    def __call__(self, x):
        return pointwise_conv2d(x, self.kernel)


class Depthwise(_Layer):
    def __init__(self, name, rng, kernel, channels, stride):
        super().__init__(name)
        self.stride = stride
        fan = kernel * kernel
        self.kernel = self._add_param("kernel", Tensor(
            _glorot(rng, (kernel, kernel, channels), fan, fan), requires_grad=True))

    def __call__(self, x):
        return depthwise_conv2d(x, self.kernel, stride=self.stride, padding="same")


class TransposedConv(_Layer):
    def __init__(self, name, rng, kernel, c_in, c_out, stride, padding="same", bias=False):
        super().__init__(name)
        self.stride, self.padding = stride, padding
        fan = kernel * kernel
        self.kernel = self._add_param("kernel", Tensor(
            _glorot(rng, (kernel, kernel, c_out, c_in), fan * c_in, fan * c_out),
            requires_grad=True))
        self.bias = self._add_param("bias", Tensor(
            np.zeros(c_out, dtype=np.float32), requires_grad=True)) if bias else None

    def __call__(self, x):
        return transposed_conv2d(x, self.kernel, self.bias,
                                 stride=self.stride, padding=self.padding)


class BatchNorm(_Layer):
    def __init__(self, name, channels):
        super().__init__(name)
        self.gamma = self._add_param("gamma", Tensor(
            np.ones(channels, dtype=np.float32), requires_grad=True))
        self.beta = self._add_param("beta", Tensor(
            np.zeros(channels, dtype=np.float32), requires_grad=True))
        self.state = BatchNormState(channels)
        self._states.append(("running", self.state))

    def __call__(self, x, train):
        return batch_norm(x, self.gamma, self.beta, self.state,
                          mode="train" if train else "eval")


class Linear(_Layer):
    def __init__(self, name, rng, d_in, d_out):
        super().__init__(name)
        self.weight = self._add_param("weight", Tensor(
            _glorot(rng, (d_in, d_out), d_in, d_out), requires_grad=True))
        self.bias = self._add_param("bias", Tensor(
            np.zeros(d_out, dtype=np.float32), requires_grad=True))

    def __call__(self, x):
        return fully_connected(x, self.weight, self.bias)


class _Composite(_Layer):
    def __init__(self, name):
        super().__init__(name)
        self.children = []

    def _add_child(self, child):
        self.children.append(child)
        return child

    def named_parameters(self):
        out = list(super().named_parameters())
        for child in self.children:
            out.extend(child.named_parameters())
        return out

    def named_states(self):
        out = list(super().named_states())
        for child in self.children:
            out.extend(child.named_states())
        return out


class DscBlock(_Composite):
    def __init__(self, name, rng, c_in, c_out, stride):
        super().__init__(name)
        self.pre = self._add_child(Conv(f"{name}.pre", rng, 1, c_in, c_in, 1, "valid"))
        self.bn_pre = self._add_child(BatchNorm(f"{name}.bn_pre", c_in))
        self.dw = self._add_child(Depthwise(f"{name}.dw", rng, 3, c_in, stride))
        self.bn_dw = self._add_child(BatchNorm(f"{name}.bn_dw", c_in))
        self.pw = self._add_child(Pointwise(f"{name}.pw", rng, c_in, c_out))
        self.bn_pw = self._add_child(BatchNorm(f"{name}.bn_pw", c_out))
        if stride != 1 or c_in != c_out:
            self.proj = self._add_child(
                Conv(f"{name}.proj", rng, 1, c_in, c_out, stride, "valid", bias=True))
        else:
            self.proj = None

    def __call__(self, x, train):
        main = relu(self.bn_pre(self.pre(x), train))
        main = relu(self.bn_dw(self.dw(main), train))
        main = relu(self.bn_pw(self.pw(main), train))
        shortcut = self.proj(x) if self.proj is not None else x
        return main + shortcut


class TransposedBlock(_Composite):
    def __init__(self, name, rng, c_in, c_out):
        super().__init__(name)
        self.main = self._add_child(
            TransposedConv(f"{name}.main", rng, 3, c_in, c_out, 2, "same"))
        self.bn = self._add_child(BatchNorm(f"{name}.bn", c_out))
        self.skip = self._add_child(
            TransposedConv(f"{name}.skip", rng, 2, c_in, c_out, 2, "valid", bias=True))

    def __call__(self, x, train):
        return relu(self.bn(self.main(x), train)) + self.skip(x)


class Encoder(_Composite):
    def __init__(self, rng):
        super().__init__("encoder")
        self.stem = self._add_child(Conv("encoder.stem", rng, STEM["kernel"],
                                         STEM["c_in"], STEM["c_out"], STEM["stride"]))
        self.bn_stem = self._add_child(BatchNorm("encoder.bn_stem", STEM["c_out"]))
        self.blocks = [self._add_child(DscBlock(f"encoder.block{i + 1}", rng, c_in, c_out, s))
                       for i, (c_in, c_out, s) in enumerate(ENCODER_BLOCKS)]
        last_c = ENCODER_BLOCKS[-1][1]
        self.head = self._add_child(Conv("encoder.head", rng, 1, last_c, HEAD_CHANNELS,
                                         1, "valid"))
        self.bn_head = self._add_child(BatchNorm("encoder.bn_head", HEAD_CHANNELS))
        self._flat = HEAD_CHANNELS * 4 * 5
        self.fc = self._add_child(Linear("encoder.fc", rng, self._flat, EMBEDDING_DIM))

    def __call__(self, x, train):
        if x.ndim != 4 or tuple(x.shape[1:]) != INPUT_SHAPE:
            raise DimensionError(
                f"encoder input must be (N,{INPUT_SHAPE[0]},{INPUT_SHAPE[1]},{INPUT_SHAPE[2]}), "
                f"got {tuple(x.shape)}")
        h = relu(self.bn_stem(self.stem(x), train))
        for block in self.blocks:
            h = block(h, train)
        h = relu(self.bn_head(self.head(h), train))
        return self.fc(h.reshape(h.shape[0], self._flat))


class Decoder(_Composite):
    def __init__(self, rng):
        super().__init__("decoder")
        self.fc = self._add_child(Linear("decoder.fc", rng, EMBEDDING_DIM, DECODER_FC_WIDTH))
        self.blocks = [self._add_child(TransposedBlock(f"decoder.block{i + 1}", rng, c_in, c_out))
                       for i, (c_in, c_out) in enumerate(DECODER_BLOCKS)]
        self.final = self._add_child(
            TransposedConv("decoder.final", rng, DECODER_FINAL_KERNEL,
                           DECODER_BLOCKS[-1][1], 1, 1, "same", bias=True))

    def __call__(self, z, train):
        if z.ndim != 2 or z.shape[1] != EMBEDDING_DIM:
            raise DimensionError(
                f"decoder input must be (N,{EMBEDDING_DIM}), got {tuple(z.shape)}")
        h = relu(self.fc(z))
        h = h.reshape(z.shape[0], *DECODER_RESHAPE)
        for block in self.blocks:
            h = block(h, train)
        h = self.final(h)
        # transposed stack produces 128x160; symmetric 2-frame crop to 156
        crop = (h.shape[2] - INPUT_SHAPE[1]) // 2
        return h[:, :, crop:crop + INPUT_SHAPE[1], :]


class DscanAutoencoder:
    """Encoder + decoder pair operating on (N,128,156,1) batches."""

    def __init__(self, rng=None, seed=0):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.encoder = Encoder(rng)
        self.decoder = Decoder(rng)

    # -- parameters / state --------------------------------------------------

    def named_parameters(self):
        return self.encoder.named_parameters() + self.decoder.named_parameters()

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_states(self):
        return self.encoder.named_states() + self.decoder.named_states()

    def state_arrays(self):
        """All weights and running statistics, keyed by name (for checkpoints)."""
        arrays = {name: t.data for name, t in self.named_parameters()}
        for name, state in self.named_states():
            arrays[f"{name}_mean"] = state.running_mean
            arrays[f"{name}_var"] = state.running_var
        return arrays

    def load_state_arrays(self, arrays):
        for name, t in self.named_parameters():
            if name not in arrays:
                raise DimensionError(f"checkpoint is missing parameter {name!r}")
            value = np.asarray(arrays[name], dtype=np.float32)
            if value.shape != t.data.shape:
                raise DimensionError(
                    f"checkpoint parameter {name!r} has shape {value.shape}, "
                    f"expected {t.data.shape}")
            t.data = value
        for name, state in self.named_states():
            state.running_mean = np.asarray(arrays[f"{name}_mean"], dtype=np.float32)
            state.running_var = np.asarray(arrays[f"{name}_var"], dtype=np.float32)

    # -- forward passes --------------------------------------------------------

    def encode(self, x, train=False):
        return self.encoder(x, train)

    def decode(self, z, train=False):
        return self.decoder(z, train)

    def forward(self, x, train=True):
        z = self.encode(x, train)
        return z, self.decode(z, train)

    def embed_all(self, features, batch_size=64):
        """Eval-mode embeddings (float64 numpy) for an (N,128,156,1) array."""
        chunks = []
        with no_grad():
            for start in range(0, len(features), batch_size):
                x = Tensor(features[start:start + batch_size])
                chunks.append(self.encode(x, train=False).data.astype(np.float64))
        return np.concatenate(chunks, axis=0)


def _ceil_div(a, b):
    return -(-a // b)


def architecture_spec():
    """LayerSpec sequence mirroring the model, for the complexity analyzer."""
    layers = []
    h, w = INPUT_SHAPE[0], INPUT_SHAPE[1]
    h, w = _ceil_div(h, STEM["stride"]), _ceil_div(w, STEM["stride"])
    layers.append(LayerSpec("encoder.stem", "conv", STEM["kernel"], STEM["stride"],
                            STEM["c_in"], STEM["c_out"], h, w))
    layers.append(LayerSpec("encoder.bn_stem", "bn", c_out=STEM["c_out"]))
    for i, (c_in, c_out, stride) in enumerate(ENCODER_BLOCKS):
        name = f"encoder.block{i + 1}"
        layers.append(LayerSpec(f"{name}.pre", "conv", 1, 1, c_in, c_in, h, w))
        layers.append(LayerSpec(f"{name}.bn_pre", "bn", c_out=c_in))
        oh, ow = _ceil_div(h, stride), _ceil_div(w, stride)
        layers.append(LayerSpec(f"{name}.dsc", "dsc", 3, stride, c_in, c_out, oh, ow))
        layers.append(LayerSpec(f"{name}.bn_dw", "bn", c_out=c_in))
        layers.append(LayerSpec(f"{name}.bn_pw", "bn", c_out=c_out))
        if stride != 1 or c_in != c_out:
            layers.append(LayerSpec(f"{name}.proj", "conv", 1, stride, c_in, c_out,
                                    oh, ow, residual=True))
        h, w = oh, ow
    last_c = ENCODER_BLOCKS[-1][1]
    layers.append(LayerSpec("encoder.head", "conv", 1, 1, last_c, HEAD_CHANNELS, h, w))
    layers.append(LayerSpec("encoder.bn_head", "bn", c_out=HEAD_CHANNELS))
    layers.append(LayerSpec("encoder.fc", "fc", d_in=HEAD_CHANNELS * h * w,
                            d_out=EMBEDDING_DIM))

    layers.append(LayerSpec("decoder.fc", "fc", d_in=EMBEDDING_DIM, d_out=DECODER_FC_WIDTH))
    h, w = DECODER_RESHAPE[0], DECODER_RESHAPE[1]
    for i, (c_in, c_out) in enumerate(DECODER_BLOCKS):
        name = f"decoder.block{i + 1}"
        h, w = 2 * h, 2 * w
        layers.append(LayerSpec(f"{name}.main", "tconv", 3, 2, c_in, c_out, h, w))
        layers.append(LayerSpec(f"{name}.bn", "bn", c_out=c_out))
        layers.append(LayerSpec(f"{name}.skip", "tconv", 2, 2, c_in, c_out, h, w,
                                residual=True))
    layers.append(LayerSpec("decoder.final", "tconv", DECODER_FINAL_KERNEL, 1,
                            DECODER_BLOCKS[-1][1], 1, h, w))
    return ArchitectureSpec(layers=layers, embedding_dim=EMBEDDING_DIM,
                            decoder_fc_width=DECODER_FC_WIDTH,
                            decoder_reshape=DECODER_RESHAPE)
