#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Declarative CRNet / CRNet-SE encoder and decoder specs, the runtime network
that executes them, checkpoints and encoder-decoder recombination
"""

import hashlib
import json
import logging
import os
from collections import OrderedDict
from fractions import Fraction

import numpy as np

import autodiff as ad
from binary_format import BinaryReader, BinaryWriter

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'CSIK'
CHECKPOINT_VERSION = 1

ENCODER = 'encoder'
DECODER = 'decoder'

LAYER_KINDS = ('conv2d', 'dense', 'batch_norm', 'leaky_relu', 'sigmoid', 'concat',
               'add', 'scale_gate', 'flatten', 'reshape')

_REQUIRED_PARAMS = {
    'conv2d': ('in_channels', 'out_channels', 'kernel'),
    'dense': ('in_features', 'out_features'),
    'batch_norm': ('channels',),
    'leaky_relu': ('slope',),
    'reshape': ('shape',),
}

_INPUT_COUNT = {'concat': 2, 'add': 2}


class LayerSpec:
    """One node of a network graph"""

    def __init__(self, name, kind, inputs, **params):
        if kind not in LAYER_KINDS:
            raise ValueError(f"Unknown layer kind '{kind}' for layer '{name}'")
        self.name = name
        self.kind = kind
        self.inputs = list(inputs)
        self.params = params

    def to_dict(self):
        return {'name': self.name, 'kind': self.kind, 'inputs': self.inputs, 'params': self.params}

    @staticmethod
    def from_dict(data):
        return LayerSpec(data['name'], data['kind'], data['inputs'], **data.get('params', {}))


class ModelSpec:
    """
    Directed acyclic layer graph with one input ('input') and one output.
    Layers are listed in execution order.
    """

    def __init__(self, name, role, input_shape, layers, output=None):
        if role not in (ENCODER, DECODER):
            raise ValueError(f"Unknown model role '{role}'")
        self.name = name
        self.role = role
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        self.output = output or self.layers[-1].name
        self._shapes = None

    def infer_shapes(self):
        """
        Propagate per-sample shapes through the graph

        Returns:
            dict: Layer name -> per-sample output shape (batch excluded)
        """
        if self._shapes is not None:
            return self._shapes
        shapes = {'input': self.input_shape}
        for layer in self.layers:
            if layer.name in shapes:
                raise ValueError(f"{self.name}: duplicate layer name '{layer.name}'")
            for key in _REQUIRED_PARAMS.get(layer.kind, ()):
                if key not in layer.params:
                    raise ValueError(f"{self.name}: layer '{layer.name}' is missing parameter '{key}'")
            expected_inputs = _INPUT_COUNT.get(layer.kind, 1)
            if len(layer.inputs) != expected_inputs:
                raise ValueError(f"{self.name}: layer '{layer.name}' needs {expected_inputs} input(s)")
            missing = [src for src in layer.inputs if src not in shapes]
            if missing:
                raise ValueError(f"{self.name}: layer '{layer.name}' reads undefined {missing}")
            shapes[layer.name] = self._layer_shape(layer, [shapes[src] for src in layer.inputs])
        if self.output not in shapes:
            raise ValueError(f"{self.name}: output '{self.output}' is not a layer")
        self._shapes = shapes
        return shapes

    def _layer_shape(self, layer, in_shapes):
        p = layer.params
        shape = in_shapes[0]
        where = f"{self.name}.{layer.name}"
        if layer.kind == 'conv2d':
            kernel = tuple(p['kernel'])
            if len(shape) != 3 or shape[0] != p['in_channels']:
                raise ValueError(f"{where}: expects {p['in_channels']} channels, got shape {shape}")
            if p['out_channels'] < 1 or len(kernel) != 2 or min(kernel) < 1:
                raise ValueError(f"{where}: invalid conv parameters {p}")
            return (p['out_channels'],) + shape[1:]
        if layer.kind == 'dense':
            if shape != (p['in_features'],) or p['out_features'] < 1:
                raise ValueError(f"{where}: expects input ({p['in_features']},), got {shape}")
            return (p['out_features'],)
        if layer.kind == 'batch_norm':
            if len(shape) != 3 or shape[0] != p['channels']:
                raise ValueError(f"{where}: expects {p['channels']} channels, got shape {shape}")
            return shape
        if layer.kind == 'leaky_relu' and not p['slope'] >= 0:
            raise ValueError(f"{where}: slope must be >= 0")
        if layer.kind in ('leaky_relu', 'sigmoid', 'scale_gate'):
            return shape
        if layer.kind == 'concat':
            other = in_shapes[1]
            if len(shape) != 3 or len(other) != 3 or shape[1:] != other[1:]:
                raise ValueError(f"{where}: cannot concatenate {shape} and {other}")
            return (shape[0] + other[0],) + shape[1:]
        if layer.kind == 'add':
            if shape != in_shapes[1]:
                raise ValueError(f"{where}: cannot add {shape} and {in_shapes[1]}")
            return shape
        if layer.kind == 'flatten':
            return (int(np.prod(shape)),)
        if layer.kind == 'reshape':
            target = tuple(p['shape'])
            if int(np.prod(target)) != int(np.prod(shape)):
                raise ValueError(f"{where}: cannot reshape {shape} to {target}")
            return target
        raise ValueError(f"{where}: unhandled layer kind {layer.kind}")

    @property
    def output_shape(self):
        return self.infer_shapes()[self.output]

    def to_dict(self):
        return {
            'name': self.name,
            'role': self.role,
            'input_shape': list(self.input_shape),
            'output': self.output,
            'layers': [layer.to_dict() for layer in self.layers],
        }

    def to_json(self, indent=None):
        if indent is None:
            return json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    @staticmethod
    def from_dict(data):
        layers = [LayerSpec.from_dict(layer) for layer in data['layers']]
        return ModelSpec(data['name'], data['role'], data['input_shape'], layers, data.get('output'))

    @staticmethod
    def from_json(text):
        return ModelSpec.from_dict(json.loads(text))

    def spec_hash(self):
        """32-byte SHA-256 digest of the canonical JSON"""
        return hashlib.sha256(self.to_json().encode('utf-8')).digest()


def compression_ratio(spec: ModelSpec):
    """gamma = N_s / (2 N_t N_c) as an exact fraction"""
    shapes = spec.infer_shapes()
    if spec.role == ENCODER:
        return Fraction(int(np.prod(shapes[spec.output])), int(np.prod(spec.input_shape)))
    return Fraction(int(np.prod(spec.input_shape)), int(np.prod(shapes[spec.output])))


class _GraphBuilder:

    def __init__(self):
        self.layers = []
        self.last = 'input'

    def add(self, name, kind, inputs=None, **params):
        self.layers.append(LayerSpec(name, kind, inputs or [self.last], **params))
        self.last = name
        return name

    def conv(self, name, src, c_in, c_out, kernel, activation=True):
        out = self.add(name, 'conv2d', [src], in_channels=c_in, out_channels=c_out, kernel=list(kernel))
        if activation:
            self.add(f"{name}_bn", 'batch_norm', [out], channels=c_out)
            out = self.add(f"{name}_act", 'leaky_relu', slope=0.3)
        return out


def _check_dims(n_t, n_c, n_s):
    for label, value in (('n_t', n_t), ('n_c', n_c), ('n_s', n_s)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{label} must be a positive integer, got {value!r}")
    if n_s > 2 * n_t * n_c:
        raise ValueError(f"Codeword length {n_s} exceeds the {2 * n_t * n_c} real CSI entries")


def build_student_encoder(n_t, n_c, n_s) -> ModelSpec:
    """CRNet-SE encoder: one 3x3 conv for feature extraction, one dense layer for compression"""
    _check_dims(n_t, n_c, n_s)
    g = _GraphBuilder()
    g.conv('conv', 'input', 2, 2, (3, 3))
    g.add('flatten', 'flatten')
    g.add('dense', 'dense', in_features=2 * n_t * n_c, out_features=n_s)
    return ModelSpec('crnet_se_encoder', ENCODER, (2, n_t, n_c), g.layers)


def build_teacher_encoder(n_t, n_c, n_s, width=16) -> ModelSpec:
    """CRNet encoder: 3x3 branch and 1x9/9x1 branch, concatenated and merged by a 1x1 conv"""
    _check_dims(n_t, n_c, n_s)
    g = _GraphBuilder()
    branch_a = g.conv('branch_a_conv3x3', 'input', 2, width, (3, 3))
    g.conv('branch_b_conv1x9', 'input', 2, width, (1, 9))
    branch_b = g.conv('branch_b_conv9x1', g.last, width, width, (9, 1))
    g.add('concat', 'concat', [branch_a, branch_b])
    g.conv('merge_conv1x1', 'concat', 2 * width, 2, (1, 1))
    g.add('flatten', 'flatten')
    g.add('dense', 'dense', in_features=2 * n_t * n_c, out_features=n_s)
    return ModelSpec('crnet_encoder', ENCODER, (2, n_t, n_c), g.layers)


def _crblock(g, prefix, src, width):
    g.conv(f"{prefix}_a_conv3x3_1", src, 2, width, (3, 3))
    branch_a = g.conv(f"{prefix}_a_conv3x3_2", g.last, width, width, (3, 3))
    g.conv(f"{prefix}_b_conv1x9", src, 2, width, (1, 9))
    branch_b = g.conv(f"{prefix}_b_conv9x1", g.last, width, width, (9, 1))
    g.add(f"{prefix}_concat", 'concat', [branch_a, branch_b])
    g.conv(f"{prefix}_merge_conv1x1", g.last, 2 * width, 2, (1, 1), activation=False)
    g.add(f"{prefix}_rezero", 'scale_gate')
    return g.add(f"{prefix}_skip", 'add', [src, g.last])


def build_decoder(n_t, n_c, n_s, crblock_width=8) -> ModelSpec:
    """Dense, 5x5 head conv, two ReZero CRBlocks and a sigmoid output"""
    _check_dims(n_t, n_c, n_s)
    if not isinstance(crblock_width, (int, np.integer)) or crblock_width < 2:
        raise ValueError(f"crblock_width must be an integer >= 2, got {crblock_width!r}")
    g = _GraphBuilder()
    g.add('dense', 'dense', in_features=n_s, out_features=2 * n_t * n_c)
    g.add('reshape', 'reshape', shape=[2, n_t, n_c])
    out = g.conv('head_conv5x5', 'reshape', 2, 2, (5, 5))
    out = _crblock(g, 'crblock1', out, crblock_width)
    out = _crblock(g, 'crblock2', out, crblock_width)
    g.add('sigmoid', 'sigmoid', [out])
    return ModelSpec('crnet_decoder', DECODER, (n_s,), g.layers)


def derive_seed(seed, label):
    """Stable 32-bit initialization seed for one named network of a run"""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def _glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Network:
    """Executable network built from a ModelSpec"""

    def __init__(self, spec: ModelSpec, seed=0):
        self.spec = spec
        self.shapes = spec.infer_shapes()
        self.params = OrderedDict()
        self.buffers = OrderedDict()
        self.training = False
        rng = np.random.default_rng(seed)
        dtype = ad.default_dtype()
        for layer in spec.layers:
            p = layer.params
            if layer.kind == 'conv2d':
                k_h, k_w = p['kernel']
                shape = (p['out_channels'], p['in_channels'], k_h, k_w)
                kernel = _glorot_uniform(rng, shape, p['in_channels'] * k_h * k_w, p['out_channels'] * k_h * k_w)
                self._param(f"{layer.name}.kernel", kernel)
                self._param(f"{layer.name}.bias", np.zeros(p['out_channels']))
            elif layer.kind == 'dense':
                shape = (p['out_features'], p['in_features'])
                weight = _glorot_uniform(rng, shape, p['in_features'], p['out_features'])
                self._param(f"{layer.name}.weight", weight)
                self._param(f"{layer.name}.bias", np.zeros(p['out_features']))
            elif layer.kind == 'batch_norm':
                self._param(f"{layer.name}.gamma", np.ones(p['channels']))
                self._param(f"{layer.name}.beta", np.zeros(p['channels']))
                self.buffers[f"{layer.name}.running_mean"] = np.zeros(p['channels'], dtype=dtype)
                self.buffers[f"{layer.name}.running_var"] = np.ones(p['channels'], dtype=dtype)
            elif layer.kind == 'scale_gate':
                self._param(f"{layer.name}.alpha", np.zeros(()))

    def _param(self, name, values):
        self.params[name] = ad.Parameter(values, name=name)

    def parameters(self):
        return list(self.params.values())

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    @property
    def input_shape(self):
        return self.spec.input_shape

    @property
    def output_shape(self):
        return self.shapes[self.spec.output]

    def forward(self, x, training=None):
        """
        Run the graph on a batch

        Args:
            x (Tensor | np.ndarray): Batch whose per-sample shape is the spec input shape
            training (bool): Overrides the network mode (batch statistics when True)

        Returns:
            Tensor: Output of the spec's output layer
        """
        x = ad.as_tensor(x)
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ValueError(f"{self.spec.name}: input shape {x.shape[1:]} does not match "
                             f"{self.spec.input_shape}")
        training = self.training if training is None else training
        values = {'input': x}
        for layer in self.spec.layers:
            inputs = [values[src] for src in layer.inputs]
            values[layer.name] = self._apply(layer, inputs, training)
        return values[self.spec.output]

    __call__ = forward

    def _apply(self, layer, inputs, training):
        name, kind, p = layer.name, layer.kind, layer.params
        x = inputs[0]
        if kind == 'conv2d':
            return ad.conv2d(x, self.params[f"{name}.kernel"], self.params[f"{name}.bias"])
        if kind == 'dense':
            return ad.dense(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])
        if kind == 'batch_norm':
            return ad.batch_norm(x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
                                 self.buffers[f"{name}.running_mean"],
                                 self.buffers[f"{name}.running_var"], training)
        if kind == 'leaky_relu':
            return ad.leaky_relu(x, p['slope'])
        if kind == 'sigmoid':
            return ad.sigmoid(x)
        if kind == 'concat':
            return ad.concat_channels(x, inputs[1])
        if kind == 'add':
            return ad.add(x, inputs[1])
        if kind == 'scale_gate':
            return ad.scale_gate(x, self.params[f"{name}.alpha"])
        if kind == 'flatten':
            return ad.flatten(x)
        return ad.reshape(x, (x.shape[0],) + tuple(p['shape']))

    def to_checkpoint(self, **metadata):
        return Checkpoint(self.spec,
                          OrderedDict((k, p.values.copy()) for k, p in self.params.items()),
                          OrderedDict((k, v.copy()) for k, v in self.buffers.items()),
                          metadata)

    def load_checkpoint(self, checkpoint):
        if checkpoint.spec_hash != self.spec.spec_hash():
            raise ValueError(f"Checkpoint spec hash {checkpoint.spec_hash.hex()[:16]} does not match "
                             f"network {self.spec.name} ({self.spec.spec_hash().hex()[:16]})")
        if set(checkpoint.params) != set(self.params) or set(checkpoint.buffers) != set(self.buffers):
            raise ValueError(f"Checkpoint arrays do not match the parameters of {self.spec.name}")
        dtype = ad.default_dtype()
        for name, param in self.params.items():
            values = checkpoint.params[name]
            if values.shape != param.shape:
                raise ValueError(f"{name}: checkpoint shape {values.shape} vs parameter {param.shape}")
            param.values = np.array(values, dtype=dtype)
            param.reset_optimizer_state()
            param.grad = None
        for name in self.buffers:
            self.buffers[name] = np.array(checkpoint.buffers[name], dtype=dtype)
        return self

    @staticmethod
    def from_checkpoint(checkpoint):
        return Network(checkpoint.spec).load_checkpoint(checkpoint)

    def copy(self):
        return Network.from_checkpoint(self.to_checkpoint())


class Checkpoint:
    """Named parameter arrays, batch-norm statistics and run metadata of one network"""

    def __init__(self, spec, params, buffers, metadata=None):
        self.spec = spec
        self.params = OrderedDict(params)
        self.buffers = OrderedDict(buffers)
        self.metadata = dict(metadata or {})

    @property
    def spec_hash(self):
        return self.spec.spec_hash()

    def __eq__(self, other):
        if not isinstance(other, Checkpoint) or self.spec_hash != other.spec_hash:
            return False
        return (self.metadata == other.metadata
                and list(self.params) == list(other.params)
                and list(self.buffers) == list(other.buffers)
                and all(np.array_equal(v, other.params[k]) for k, v in self.params.items())
                and all(np.array_equal(v, other.buffers[k]) for k, v in self.buffers.items()))


def save_checkpoint(checkpoint: Checkpoint, path):
    writer = BinaryWriter(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    writer.raw(checkpoint.spec_hash)
    writer.text(checkpoint.spec.to_json())
    writer.text(json.dumps(checkpoint.metadata, sort_keys=True))
    arrays = [(name, 0, values) for name, values in checkpoint.params.items()]
    arrays += [(name, 1, values) for name, values in checkpoint.buffers.items()]
    writer.pack('I', len(arrays))
    for name, kind, values in arrays:
        values = np.asarray(values)
        writer.text(name)
        writer.pack('BB', kind, values.ndim)
        if values.ndim:
            writer.pack(f"{values.ndim}I", *values.shape)
        writer.array(values)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    writer.write(path)
    logger.info(f"💾 Saved checkpoint {checkpoint.spec.name} to {path}")


def load_checkpoint(path, spec: ModelSpec = None) -> Checkpoint:
    """
    Read a checkpoint, optionally insisting that it matches `spec`

    Raises:
        FileNotFoundError: Missing file
        ValueError: Bad magic, version, truncation or spec hash mismatch
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    reader = BinaryReader.from_file(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    stored_hash = reader.raw(32)
    stored_spec = ModelSpec.from_json(reader.text())
    if stored_spec.spec_hash() != stored_hash:
        raise ValueError(f"{path}: embedded spec does not match its stored hash")
    if spec is not None and spec.spec_hash() != stored_hash:
        raise ValueError(f"{path}: checkpoint belongs to a different spec than {spec.name}")
    metadata = json.loads(reader.text())
    params, buffers = OrderedDict(), OrderedDict()
    (count,) = reader.unpack('I')
    for _ in range(count):
        name = reader.text()
        kind, ndim = reader.unpack('BB')
        shape = reader.unpack(f"{ndim}I") if ndim else ()
        (params if kind == 0 else buffers)[name] = reader.array(shape)
    reader.expect_end()
    return Checkpoint(stored_spec, params, buffers, metadata)


class Autoencoder:
    """Encoder network feeding a decoder network"""

    def __init__(self, encoder: Network, decoder: Network):
        if encoder.spec.role != ENCODER or decoder.spec.role != DECODER:
            raise ValueError("combine needs an encoder followed by a decoder")
        if encoder.output_shape != decoder.input_shape:
            raise ValueError(f"Encoder output {encoder.output_shape} does not match "
                             f"decoder input {decoder.input_shape}")
        self.encoder = encoder
        self.decoder = decoder

    @property
    def n_s(self):
        return self.encoder.output_shape[0]

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def forward(self, x, training=None):
        return self.decoder.forward(self.encoder.forward(x, training), training)

    __call__ = forward

    def train(self):
        self.encoder.train()
        self.decoder.train()
        return self

    def eval(self):
        self.encoder.eval()
        self.decoder.eval()
        return self

    def to_checkpoint(self, **metadata):
        return AutoencoderCheckpoint(self.encoder.to_checkpoint(**metadata),
                                     self.decoder.to_checkpoint(**metadata))


class AutoencoderCheckpoint:
    """Encoder and decoder checkpoints kept side by side in one directory"""

    ENCODER_FILE = 'encoder.csik'
    DECODER_FILE = 'decoder.csik'

    def __init__(self, encoder: Checkpoint, decoder: Checkpoint):
        self.encoder = encoder
        self.decoder = decoder

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        save_checkpoint(self.encoder, os.path.join(directory, self.ENCODER_FILE))
        save_checkpoint(self.decoder, os.path.join(directory, self.DECODER_FILE))

    @staticmethod
    def load(directory):
        return AutoencoderCheckpoint(load_checkpoint(os.path.join(directory, AutoencoderCheckpoint.ENCODER_FILE)),
                                     load_checkpoint(os.path.join(directory, AutoencoderCheckpoint.DECODER_FILE)))

    def build(self):
        return combine(self.encoder, self.decoder)

    def __eq__(self, other):
        return (isinstance(other, AutoencoderCheckpoint)
                and self.encoder == other.encoder and self.decoder == other.decoder)


def _as_network(model):
    if isinstance(model, Checkpoint):
        return Network.from_checkpoint(model)
    return model


def combine(encoder, decoder) -> Autoencoder:
    """Join an encoder and a decoder (networks or checkpoints) into one autoencoder"""
    encoder, decoder = _as_network(encoder), _as_network(decoder)
    autoencoder = Autoencoder(encoder, decoder)
    logger.info(f"Combined {encoder.spec.name} with {decoder.spec.name} (N_s={autoencoder.n_s})")
    return autoencoder


def run_inference(model, batch, chunk_size=500):
    """
    Eval-mode forward pass without a graph, in chunks.

    Encoders run one sample at a time: a codeword is bitwise the same whether
    its sample is encoded alone or as part of a dataset.
    """
    model = _as_network(model)
    batch = np.asarray(batch)
    if isinstance(model, Network) and model.spec.role == ENCODER:
        chunk_size = 1
    outputs = []
    with ad.no_grad():
        for start in range(0, len(batch), chunk_size):
            chunk = np.array(batch[start:start + chunk_size], copy=True, order='C')
            outputs.append(model.forward(chunk, training=False).values)
    if not outputs:
        out_shape = model.output_shape if isinstance(model, Network) else model.decoder.output_shape
        return np.empty((0,) + tuple(out_shape))
    return np.concatenate(outputs)


def encode(encoder, batch):
    """Codewords (B x N_s) for a batch of normalized angular-delay samples"""
    encoder = _as_network(encoder)
    if encoder.spec.role != ENCODER:
        raise ValueError(f"{encoder.spec.name} is not an encoder")
    return run_inference(encoder, batch)


def decode(decoder, codewords):
    """Reconstructions (B x 2 x N_t x N_c) in [0, 1] from a codeword batch"""
    decoder = _as_network(decoder)
    if decoder.spec.role != DECODER:
        raise ValueError(f"{decoder.spec.name} is not a decoder")
    return run_inference(decoder, codewords)
