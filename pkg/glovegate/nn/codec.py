"""
模型文件的二进制容器, 全部小端:

    偏移  长度        内容
    0     4          魔数 b'GGNN'
    4     2          格式版本 uint16
    6     2          保留, 填 0
    8     4          规范文本的字节数 n, uint32
    12    n          ModelSpec.to_text() 的 utf-8 编码
    12+n  4          权重块中数组的总个数 m, uint32
    ...              按层顺序, 层内按 TRAINABLE + STATE 的键顺序, 依次写入 float32 数组
    末尾  4          之前全部字节的 crc32, uint32

数组的形状由规范推导得出, 文件里不重复记录.
"""
import struct
import zlib
import numpy as np
from glovegate.model import *
from glovegate.nn.base import *
from glovegate.nn.network import check_weights, TrainedModel
from glovegate.tool.locate import LocateTools


_HEAD = struct.Struct('<4sHHI')
_U32 = struct.Struct('<I')


def serialize(spec: ModelSpec, weights: ModelWeights) -> bytes:
    check_weights(spec, weights)
    text = spec.to_text().encode('utf8')
    parts = [
        _HEAD.pack(GgGlobalConfig.MODEL_MAGIC, GgGlobalConfig.MODEL_VERSION, 0, len(text)),
        text,
    ]
    arrays = list()
    for layer, block in zip(build_layers(spec), weights.blocks):
        for k in layer.keys:
            arrays.append(block[k])
    parts.append(_U32.pack(len(arrays)))
    for array in arrays:
        parts.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
    payload = b''.join(parts)
    return payload + _U32.pack(zlib.crc32(payload))


def deserialize(payload: bytes) -> tuple[ModelSpec, ModelWeights]:
    if len(payload) < _HEAD.size + _U32.size * 2:
        raise ModelFileError(f'模型文件被截断, 只有{len(payload)}字节')
    magic, version, _, text_len = _HEAD.unpack_from(payload, 0)
    if magic != GgGlobalConfig.MODEL_MAGIC:
        raise ModelFileError(f'不是模型文件, 魔数为{magic!r}')
    if version != GgGlobalConfig.MODEL_VERSION:
        raise ModelFileError(f'模型文件版本{version}与当前版本{GgGlobalConfig.MODEL_VERSION}不一致')
    body, tail = payload[:-_U32.size], payload[-_U32.size:]
    if _U32.unpack(tail)[0] != zlib.crc32(body):
        raise ModelFileError('模型文件校验和不一致, 文件可能已损坏或被截断')
    offset = _HEAD.size
    if offset + text_len + _U32.size > len(body):
        raise ModelFileError('模型文件被截断, 规范文本不完整')
    try:
        text = body[offset:offset + text_len].decode('utf8')
    except UnicodeDecodeError as ex:
        raise ModelFileError(f'模型规范文本不是合法的 utf-8: {ex}')
    spec = ModelSpec.from_text(text)
    offset += text_len
    (count, ) = _U32.unpack_from(body, offset)
    offset += _U32.size
    layers = build_layers(spec)
    expected = sum(len(layer.keys) for layer in layers)
    if count != expected:
        raise ModelFileError(f'模型文件记录了{count}个数组, 规范需要{expected}个')
    blocks = list()
    for layer in layers:
        shapes = layer.param_shapes()
        block = dict()
        for k in layer.keys:
            size = int(np.prod(shapes[k]))
            nbytes = size * 4
            if offset + nbytes > len(body):
                raise ModelFileError(f'模型文件被截断, {layer.name}.{k}不完整')
            array = np.frombuffer(body, dtype='<f4', count=size, offset=offset)
            block[k] = array.astype(np.float32).reshape(shapes[k])
            offset += nbytes
        blocks.append(block)
    if offset != len(body):
        raise ModelFileError(f'模型文件末尾有{len(body) - offset}字节多余数据')
    weights = ModelWeights(blocks=blocks, version=version)
    try:
        check_weights(spec, weights)
    except ModelError as ex:
        raise ModelFileError(f'模型文件中的参数无效: {ex}')
    return spec, weights


def save_model(path: str, spec: ModelSpec, weights: ModelWeights) -> int:
    payload = serialize(spec, weights)
    LocateTools.write_bytes(path, payload)
    return len(payload)


def load_model(path: str) -> TrainedModel:
    payload = LocateTools.read_bytes(path)
    if payload is None:
        raise ModelFileError(f'模型文件{path}不存在')
    try:
        spec, weights = deserialize(payload)
    except ModelFileError as ex:
        raise ModelFileError(f'[{path}]{ex}') from ex
    return TrainedModel(spec, weights)


__all__ = [
    'serialize',
    'deserialize',
    'save_model',
    'load_model',
]
