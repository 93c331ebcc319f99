"""ONNX export via direct protobuf wire-format encoding.

Writes ModelProto documents for the toy architectures without the onnx
package: a small graph builder plus one export function per architecture
that mirrors its forward pass node by node. Field numbers follow the
public onnx.proto schema.
"""

from __future__ import annotations

import struct

import numpy as np
import torch.nn as nn

from .models import ExtractorA, ExtractorB, TinyUNet

OPSET_VERSION = 17
IR_VERSION = 8
FLOAT = 1  # TensorProto.DataType


def _varint(v: int) -> bytes:
    if v < 0:
        raise ValueError("negative varints unsupported in this writer")
    out = bytearray()
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _ld(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _varint(len(payload)) + payload


def _vi(field: int, value: int) -> bytes:
    return _tag(field, 0) + _varint(value)


def _string(field: int, s: str) -> bytes:
    return _ld(field, s.encode("utf-8"))


def _tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float32)
    body = _ld(1, b"".join(_varint(d) for d in arr.shape))  # packed dims
    body += _vi(2, FLOAT)
    body += _string(8, name)
    body += _ld(9, arr.astype("<f4").tobytes())
    return body


def _attr_ints(name: str, values) -> bytes:
    body = _string(1, name)
    body += _ld(8, b"".join(_varint(int(v)) for v in values))
    body += _vi(20, 7)  # AttributeType.INTS
    return body


def _attr_int(name: str, value: int) -> bytes:
    return _string(1, name) + _vi(3, int(value)) + _vi(20, 2)  # INT


def _attr_float(name: str, value: float) -> bytes:
    return _string(1, name) + _tag(2, 5) + struct.pack("<f", value) + _vi(20, 1)


def _value_info(name: str, shape) -> bytes:
    dims = b"".join(_ld(1, _vi(1, int(d))) for d in shape)
    tensor_type = _vi(1, FLOAT) + _ld(2, dims)
    return _string(1, name) + _ld(2, _ld(1, tensor_type))


class GraphBuilder:
    def __init__(self, name: str):
        self.name = name
        self._nodes: list[bytes] = []
        self._initializers: list[bytes] = []
        self._inputs: list[bytes] = []
        self._outputs: list[bytes] = []
        self._counter = 0

    def fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}_{self._counter}"

    def input(self, name: str, shape) -> str:
        self._inputs.append(_value_info(name, shape))
        return name

    def output(self, name: str, shape) -> None:
        self._outputs.append(_value_info(name, shape))

    def initializer(self, name: str, arr) -> str:
        self._initializers.append(_tensor(name, arr))
        return name

    def node(self, op: str, inputs, outputs, attrs=()) -> str:
        body = b"".join(_string(1, i) for i in inputs)
        body += b"".join(_string(2, o) for o in outputs)
        body += _string(4, op)
        body += b"".join(_ld(5, a) for a in attrs)
        self._nodes.append(body)
        return outputs[0]

    # torch-module helpers -------------------------------------------------

    def conv(self, x: str, module: nn.Conv2d, stem: str) -> str:
        w = self.initializer(f"{stem}_w", module.weight.detach().numpy())
        inputs = [x, w]
        if module.bias is not None:
            inputs.append(self.initializer(f"{stem}_b", module.bias.detach().numpy()))
        pad = (module.padding if isinstance(module.padding, tuple) else (module.padding,) * 2)
        stride = (module.stride if isinstance(module.stride, tuple) else (module.stride,) * 2)
        attrs = [
            _attr_ints("kernel_shape", module.kernel_size),
            _attr_ints("strides", stride),
            _attr_ints("pads", [pad[0], pad[1], pad[0], pad[1]]),
            _attr_ints("dilations", [1, 1]),
            _attr_int("group", 1),
        ]
        return self.node("Conv", inputs, [self.fresh(stem)], attrs)

    def conv_transpose(self, x: str, module: nn.ConvTranspose2d, stem: str) -> str:
        w = self.initializer(f"{stem}_w", module.weight.detach().numpy())
        inputs = [x, w]
        if module.bias is not None:
            inputs.append(self.initializer(f"{stem}_b", module.bias.detach().numpy()))
        stride = (module.stride if isinstance(module.stride, tuple) else (module.stride,) * 2)
        attrs = [
            _attr_ints("kernel_shape", module.kernel_size),
            _attr_ints("strides", stride),
            _attr_ints("pads", [0, 0, 0, 0]),
            _attr_ints("output_padding", [0, 0]),
        ]
        return self.node("ConvTranspose", inputs, [self.fresh(stem)], attrs)

    def batchnorm(self, x: str, module: nn.BatchNorm2d, stem: str) -> str:
        scale = self.initializer(f"{stem}_scale", module.weight.detach().numpy())
        bias = self.initializer(f"{stem}_bias", module.bias.detach().numpy())
        mean = self.initializer(f"{stem}_mean", module.running_mean.detach().numpy())
        var = self.initializer(f"{stem}_var", module.running_var.detach().numpy())
        attrs = [_attr_float("epsilon", module.eps)]
        return self.node(
            "BatchNormalization", [x, scale, bias, mean, var], [self.fresh(stem)], attrs
        )

    def relu(self, x: str) -> str:
        return self.node("Relu", [x], [self.fresh("relu")])

    def sigmoid(self, x: str) -> str:
        return self.node("Sigmoid", [x], [self.fresh("sigmoid")])

    def maxpool(self, x: str, kernel: int, stride: int) -> str:
        attrs = [_attr_ints("kernel_shape", [kernel, kernel]),
                 _attr_ints("strides", [stride, stride]),
                 _attr_ints("pads", [0, 0, 0, 0])]
        return self.node("MaxPool", [x], [self.fresh("pool")], attrs)

    def global_average_pool(self, x: str) -> str:
        return self.node("GlobalAveragePool", [x], [self.fresh("gap")])

    def flatten(self, x: str) -> str:
        return self.node("Flatten", [x], [self.fresh("flat")], [_attr_int("axis", 1)])

    def linear(self, x: str, module: nn.Linear, stem: str) -> str:
        w = self.initializer(f"{stem}_w", module.weight.detach().numpy())
        inputs = [x, w]
        if module.bias is not None:
            inputs.append(self.initializer(f"{stem}_b", module.bias.detach().numpy()))
        attrs = [_attr_int("transB", 1)]
        return self.node("Gemm", inputs, [self.fresh(stem)], attrs)

    def concat(self, xs, axis: int) -> str:
        return self.node("Concat", list(xs), [self.fresh("cat")], [_attr_int("axis", axis)])

    def to_bytes(self) -> bytes:
        graph = b"".join(_ld(1, n) for n in self._nodes)
        graph += _string(2, self.name)
        graph += b"".join(_ld(5, t) for t in self._initializers)
        graph += b"".join(_ld(11, v) for v in self._inputs)
        graph += b"".join(_ld(12, v) for v in self._outputs)
        model = _vi(1, IR_VERSION)
        model += _string(2, "drtrainer")
        model += _string(3, "0.1.0")
        model += _ld(7, graph)
        model += _ld(8, _string(1, "") + _vi(2, OPSET_VERSION))
        return model


def export_extractor_onnx(model, input_size: int = 64) -> bytes:
    """Image (1, 3, s, s) in [0, 1] -> penultimate feature vector (1, d)."""
    b = GraphBuilder("feature_extractor")
    x = b.input("image", (1, 3, input_size, input_size))
    if isinstance(model, ExtractorA):
        x = b.maxpool(b.relu(b.batchnorm(b.conv(x, model.conv1, "conv1"), model.bn1, "bn1")), 2, 2)
        x = b.maxpool(b.relu(b.batchnorm(b.conv(x, model.conv2, "conv2"), model.bn2, "bn2")), 2, 2)
        x = b.maxpool(b.relu(b.batchnorm(b.conv(x, model.conv3, "conv3"), model.bn3, "bn3")), 2, 2)
    elif isinstance(model, ExtractorB):
        x = b.maxpool(b.relu(b.batchnorm(b.conv(x, model.conv1, "conv1"), model.bn1, "bn1")), 2, 2)
        p1 = b.relu(b.conv(x, model.branch1, "branch1"))
        p3 = b.relu(b.conv(x, model.branch3, "branch3"))
        x = b.maxpool(b.relu(b.batchnorm(b.concat([p1, p3], axis=1), model.bn_cat, "bn_cat")), 2, 2)
        x = b.maxpool(b.relu(b.batchnorm(b.conv(x, model.conv2, "conv2"), model.bn2, "bn2")), 2, 2)
    else:
        raise TypeError(f"no exporter for {type(model).__name__}")
    x = b.flatten(b.global_average_pool(x))
    x = b.linear(x, model.fc_feat, "fc_feat")
    b.output(x, (1, model.feature_dim))
    return b.to_bytes()


def export_unet_onnx(model: TinyUNet, input_size: int = 64) -> bytes:
    """Image (1, 3, s, s) in [0, 1] -> probability map (1, 1, s, s)."""
    b = GraphBuilder("lesion_unet")
    x = b.input("image", (1, 3, input_size, input_size))
    e1 = b.relu(b.conv(x, model.enc1, "enc1"))
    e2 = b.relu(b.conv(b.maxpool(e1, 2, 2), model.enc2, "enc2"))
    bott = b.relu(b.conv(b.maxpool(e2, 2, 2), model.bottleneck, "bottleneck"))
    d1 = b.relu(b.conv(b.concat([b.conv_transpose(bott, model.up1, "up1"), e2], 1),
                       model.dec1, "dec1"))
    d2 = b.relu(b.conv(b.concat([b.conv_transpose(d1, model.up2, "up2"), e1], 1),
                       model.dec2, "dec2"))
    out = b.sigmoid(b.conv(d2, model.out, "out"))
    b.output(out, (1, 1, input_size, input_size))
    return b.to_bytes()
