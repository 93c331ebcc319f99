"""Minimal ONNX model reader and executor.

Parses the protobuf wire format directly (no protobuf dependency) for the
message subset an exported small CNN uses, and evaluates the graph with
numpy. Supported ops: Conv, ConvTranspose, BatchNormalization (inference),
Relu, Sigmoid, MaxPool, GlobalAveragePool, Flatten, Gemm, MatMul, Add,
Concat, Reshape.

Field numbers follow the public onnx.proto schema; unknown fields are
skipped, so files from standard exporters load as long as they stay inside
the op subset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class OnnxFormatError(ValueError):
    """File is not parseable as the supported ONNX subset."""


class OnnxExecutionError(ValueError):
    """Graph references an unsupported op or inconsistent shapes."""


# ---------------------------------------------------------------------------
# protobuf wire-format primitives
# ---------------------------------------------------------------------------

def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise OnnxFormatError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise OnnxFormatError("varint too long")


def _signed(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _iter_fields(buf: bytes):
    """Yield (field_number, wire_type, payload) triples."""
    pos = 0
    while pos < len(buf):
        tag, pos = _read_varint(buf, pos)
        number = tag >> 3
        wire = tag & 0x7
        if wire == 0:  # varint
            value, pos = _read_varint(buf, pos)
            yield number, wire, value
        elif wire == 1:  # 64-bit
            yield number, wire, buf[pos : pos + 8]
            pos += 8
        elif wire == 2:  # length-delimited
            size, pos = _read_varint(buf, pos)
            if pos + size > len(buf):
                raise OnnxFormatError("truncated length-delimited field")
            yield number, wire, buf[pos : pos + size]
            pos += size
        elif wire == 5:  # 32-bit
            yield number, wire, buf[pos : pos + 4]
            pos += 4
        else:
            raise OnnxFormatError(f"unsupported wire type {wire}")


def _ints(payload, wire) -> list[int]:
    """Decode one repeated-int64 occurrence (packed or single varint)."""
    if wire == 0:
        return [_signed(payload)]
    out = []
    pos = 0
    while pos < len(payload):
        v, pos = _read_varint(payload, pos)
        out.append(_signed(v))
    return out


# ---------------------------------------------------------------------------
# ONNX message subset
# ---------------------------------------------------------------------------

TENSOR_FLOAT = 1
TENSOR_INT64 = 7


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    dtype = TENSOR_FLOAT
    name = ""
    raw = b""
    float_data: list[float] = []
    int64_data: list[int] = []
    for number, wire, payload in _iter_fields(buf):
        if number == 1:
            dims.extend(_ints(payload, wire))
        elif number == 2 and wire == 0:
            dtype = payload
        elif number == 4:  # packed floats
            float_data.extend(struct.unpack(f"<{len(payload) // 4}f", payload))
        elif number == 7:
            int64_data.extend(_ints(payload, wire))
        elif number == 8 and wire == 2:
            name = payload.decode("utf-8")
        elif number == 9 and wire == 2:
            raw = payload
    if dtype == TENSOR_FLOAT:
        if raw:
            arr = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        else:
            arr = np.array(float_data, dtype=np.float32)
    elif dtype == TENSOR_INT64:
        if raw:
            arr = np.frombuffer(raw, dtype="<i8").astype(np.int64)
        else:
            arr = np.array(int64_data, dtype=np.int64)
    else:
        raise OnnxFormatError(f"tensor {name!r}: unsupported data_type {dtype}")
    return name, arr.reshape(dims if dims else (-1,))


@dataclass
class Attribute:
    name: str
    value: object


def _parse_attribute(buf: bytes) -> Attribute:
    name = ""
    f_val = None
    i_val = None
    s_val = None
    t_val = None
    floats: list[float] = []
    ints: list[int] = []
    for number, wire, payload in _iter_fields(buf):
        if number == 1 and wire == 2:
            name = payload.decode("utf-8")
        elif number == 2 and wire == 5:
            f_val = struct.unpack("<f", payload)[0]
        elif number == 3 and wire == 0:
            i_val = _signed(payload)
        elif number == 4 and wire == 2:
            s_val = payload.decode("utf-8", errors="replace")
        elif number == 5 and wire == 2:
            t_val = _parse_tensor(payload)[1]
        elif number == 7:
            if wire == 5:
                floats.append(struct.unpack("<f", payload)[0])
            else:
                floats.extend(struct.unpack(f"<{len(payload) // 4}f", payload))
        elif number == 8:
            ints.extend(_ints(payload, wire))
    for candidate in (t_val, f_val, i_val, s_val):
        if candidate is not None:
            return Attribute(name, candidate)
    if floats:
        return Attribute(name, floats)
    return Attribute(name, ints)


@dataclass
class Node:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, object]


def _parse_node(buf: bytes) -> Node:
    inputs: list[str] = []
    outputs: list[str] = []
    op_type = ""
    attrs: dict[str, object] = {}
    for number, wire, payload in _iter_fields(buf):
        if number == 1 and wire == 2:
            inputs.append(payload.decode("utf-8"))
        elif number == 2 and wire == 2:
            outputs.append(payload.decode("utf-8"))
        elif number == 4 and wire == 2:
            op_type = payload.decode("utf-8")
        elif number == 5 and wire == 2:
            attr = _parse_attribute(payload)
            attrs[attr.name] = attr.value
    return Node(op_type, inputs, outputs, attrs)


def _parse_value_info(buf: bytes) -> tuple[str, list[int | None]]:
    name = ""
    shape: list[int | None] = []
    for number, wire, payload in _iter_fields(buf):
        if number == 1 and wire == 2:
            name = payload.decode("utf-8")
        elif number == 2 and wire == 2:  # TypeProto
            for n2, w2, p2 in _iter_fields(payload):
                if n2 == 1 and w2 == 2:  # tensor_type
                    for n3, w3, p3 in _iter_fields(p2):
                        if n3 == 2 and w3 == 2:  # shape
                            for n4, w4, p4 in _iter_fields(p3):
                                if n4 == 1 and w4 == 2:  # dim
                                    dim_value = None
                                    for n5, w5, p5 in _iter_fields(p4):
                                        if n5 == 1 and w5 == 0:
                                            dim_value = _signed(p5)
                                    shape.append(dim_value)
    return name, shape


@dataclass
class OnnxModel:
    nodes: list[Node]
    initializers: dict[str, np.ndarray]
    inputs: list[tuple[str, list[int | None]]]  # graph inputs minus initializers
    outputs: list[str]
    ir_version: int = 0
    opset: int = 0


def _parse_graph(buf: bytes) -> OnnxModel:
    nodes: list[Node] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[tuple[str, list[int | None]]] = []
    outputs: list[str] = []
    for number, wire, payload in _iter_fields(buf):
        if number == 1 and wire == 2:
            nodes.append(_parse_node(payload))
        elif number == 5 and wire == 2:
            name, arr = _parse_tensor(payload)
            initializers[name] = arr
        elif number == 11 and wire == 2:
            inputs.append(_parse_value_info(payload))
        elif number == 12 and wire == 2:
            outputs.append(_parse_value_info(payload)[0])
    inputs = [(n, s) for n, s in inputs if n not in initializers]
    return OnnxModel(nodes, initializers, inputs, outputs)


def load_model(path) -> OnnxModel:
    raw = Path(path).read_bytes()
    graph_buf = None
    ir_version = 0
    opset = 0
    try:
        for number, wire, payload in _iter_fields(raw):
            if number == 1 and wire == 0:
                ir_version = payload
            elif number == 7 and wire == 2:
                graph_buf = payload
            elif number == 8 and wire == 2:
                for n2, w2, p2 in _iter_fields(payload):
                    if n2 == 2 and w2 == 0:
                        opset = p2
    except OnnxFormatError as exc:
        raise OnnxFormatError(f"{path}: {exc}") from None
    if graph_buf is None:
        raise OnnxFormatError(f"{path}: no graph found, not an ONNX model?")
    model = _parse_graph(graph_buf)
    model.ir_version = ir_version
    model.opset = opset
    return model


# ---------------------------------------------------------------------------
# numpy executor
# ---------------------------------------------------------------------------

def _conv2d(x, w, b, strides, pads, dilations, group):
    n, c, h, wd = x.shape
    m, cg, kh, kw = w.shape
    sy, sx = strides
    dy, dx = dilations
    pt, pl, pb, pr = pads
    if group != 1:
        raise OnnxExecutionError("grouped Conv not supported")
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    oh = (h + pt + pb - (dy * (kh - 1) + 1)) // sy + 1
    ow = (wd + pl + pr - (dx * (kw - 1) + 1)) // sx + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            ys = ky * dy
            xs = kx * dx
            cols[:, :, ky, kx] = xp[:, :, ys : ys + sy * oh : sy, xs : xs + sx * ow : sx]
    out = np.einsum("nckloq,mckl->nmoq", cols, w, optimize=True)
    if b is not None:
        out = out + b.reshape(1, m, 1, 1)
    return out


def _conv_transpose2d(x, w, b, strides, pads, output_padding):
    n, c, h, wd = x.shape
    c2, m, kh, kw = w.shape
    if c2 != c:
        raise OnnxExecutionError("ConvTranspose weight/input channel mismatch")
    sy, sx = strides
    pt, pl, pb, pr = pads
    opy, opx = output_padding
    full_h = (h - 1) * sy + kh + opy
    full_w = (wd - 1) * sx + kw + opx
    out = np.zeros((n, m, full_h, full_w), dtype=x.dtype)
    contrib = np.einsum("nchw,cmkl->nmklhw", x, w, optimize=True)
    for ky in range(kh):
        for kx in range(kw):
            out[:, :, ky : ky + sy * h : sy, kx : kx + sx * wd : sx] += contrib[:, :, ky, kx]
    out = out[:, :, pt : full_h - pb, pl : full_w - pr]
    if b is not None:
        out = out + b.reshape(1, m, 1, 1)
    return out


def _maxpool2d(x, kernel, strides, pads):
    n, c, h, w = x.shape
    kh, kw = kernel
    sy, sx = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    oh = (h + pt + pb - kh) // sy + 1
    ow = (w + pl + pr - kw) // sx + 1
    out = np.full((n, c, oh, ow), -np.inf, dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out = np.maximum(out, xp[:, :, ky : ky + sy * oh : sy, kx : kx + sx * ow : sx])
    return out


def _pair(attrs, key, default):
    v = attrs.get(key, default)
    v = list(v) if isinstance(v, (list, tuple)) else [v, v]
    return [int(x) for x in v]


def _quad(attrs, key):
    v = attrs.get(key, [0, 0, 0, 0])
    return [int(x) for x in v]


def execute(model: OnnxModel, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Evaluate the graph on the given inputs; returns the output tensors."""
    values: dict[str, np.ndarray] = {
        k: np.asarray(v, dtype=np.float32) for k, v in feeds.items()
    }
    for name, arr in model.initializers.items():
        values[name] = arr
    for node in model.nodes:
        try:
            ins = [values[i] if i else None for i in node.inputs]
        except KeyError as exc:
            raise OnnxExecutionError(f"node {node.op_type}: missing input {exc}") from None
        op = node.op_type
        a = node.attrs
        if op == "Conv":
            out = _conv2d(
                ins[0], ins[1], ins[2] if len(ins) > 2 else None,
                _pair(a, "strides", 1), _quad(a, "pads"),
                _pair(a, "dilations", 1), int(a.get("group", 1)),
            )
        elif op == "ConvTranspose":
            out = _conv_transpose2d(
                ins[0], ins[1], ins[2] if len(ins) > 2 else None,
                _pair(a, "strides", 1), _quad(a, "pads"),
                _pair(a, "output_padding", 0),
            )
        elif op == "BatchNormalization":
            x, scale, bias, mean, var = ins[:5]
            eps = float(a.get("epsilon", 1e-5))
            shape = (1, -1) + (1,) * (x.ndim - 2)
            out = (x - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
            out = out * scale.reshape(shape) + bias.reshape(shape)
        elif op == "Relu":
            out = np.maximum(ins[0], 0)
        elif op == "Sigmoid":
            out = 1.0 / (1.0 + np.exp(-ins[0]))
        elif op == "MaxPool":
            out = _maxpool2d(ins[0], _pair(a, "kernel_shape", 1),
                             _pair(a, "strides", 1), _quad(a, "pads"))
        elif op == "GlobalAveragePool":
            out = ins[0].mean(axis=(2, 3), keepdims=True)
        elif op == "Flatten":
            axis = int(a.get("axis", 1))
            x = ins[0]
            out = x.reshape(int(np.prod(x.shape[:axis])), -1)
        elif op == "Gemm":
            alpha = float(a.get("alpha", 1.0))
            beta = float(a.get("beta", 1.0))
            A = ins[0].T if a.get("transA", 0) else ins[0]
            B = ins[1].T if a.get("transB", 0) else ins[1]
            out = alpha * (A @ B)
            if len(ins) > 2 and ins[2] is not None:
                out = out + beta * ins[2]
        elif op == "MatMul":
            out = ins[0] @ ins[1]
        elif op == "Add":
            out = ins[0] + ins[1]
        elif op == "Concat":
            out = np.concatenate([v for v in ins], axis=int(a.get("axis", 0)))
        elif op == "Reshape":
            shape = [int(v) for v in ins[1]]
            out = ins[0].reshape(shape)
        else:
            raise OnnxExecutionError(f"unsupported op {op!r}")
        values[node.outputs[0]] = np.asarray(out, dtype=np.float32)
    missing = [o for o in model.outputs if o not in values]
    if missing:
        raise OnnxExecutionError(f"graph outputs never produced: {missing}")
    return {o: values[o] for o in model.outputs}


def _nearest_resize_chw(chw: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    _, h, w = chw.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return chw[:, rows][:, :, cols]


def run_image_model(model: OnnxModel, rgb_hwc_uint8: np.ndarray) -> np.ndarray:
    """Feed one RGB image (H, W, 3 uint8) and return the flat output vector.

    The image is scaled to [0, 1], laid out as (1, 3, H, W), and
    nearest-neighbor resized to the model's declared spatial dims when
    those are static.
    """
    if len(model.inputs) != 1:
        raise OnnxExecutionError(f"expected exactly one graph input, got {len(model.inputs)}")
    name, shape = model.inputs[0]
    chw = (rgb_hwc_uint8.astype(np.float32) / 255.0).transpose(2, 0, 1)
    want = shape[-2:] if len(shape) >= 2 else [None, None]
    if want[0] is not None and want[1] is not None:
        if (chw.shape[1], chw.shape[2]) != (want[0], want[1]):
            chw = _nearest_resize_chw(chw, int(want[0]), int(want[1]))
    feed = chw[None, :, :, :] if len(shape) == 4 else chw
    outputs = execute(model, {name: feed})
    vec = outputs[model.outputs[0]].reshape(-1)
    return vec.astype(np.float64)
