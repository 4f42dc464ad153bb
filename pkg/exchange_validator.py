#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import logging
import os
from typing import Dict, List

from binary_format import BinaryReader
from networks import Checkpoint, ModelSpec, Network, load_checkpoint

logger = logging.getLogger(__name__)

PAIR_MAGIC = b'CSIP'
PAIR_VERSION = 1

BS_SIDE = 'bs'
UE_SIDE = 'ue'
SIDES = (BS_SIDE, UE_SIDE)

# Pair producers each side may consume
_ACCEPTED_PRODUCERS = {
    UE_SIDE: ('teacher_encoder',),
    BS_SIDE: ('teacher_encoder', 'student_encoder'),
}


class IsolationViolation(RuntimeError):
    """A protocol side was handed an artifact that belongs to the other vendor"""

    def __init__(self, side, artifact, reason):
        super().__init__(f"{side} side may not access {artifact}: {reason}")
        self.side = side
        self.artifact = artifact
        self.reason = reason


class ExchangeValidator:
    """
    Architectural isolation guard for the CSI-codeword pair exchange
    The UE vendor sees pair datasets and its own encoder only; the BS vendor sees
    its own teacher networks, its datasets and pair datasets, never the UE encoder
    """

    def __init__(self):
        self.owned_specs = {side: {} for side in SIDES}
        self.access_log: List[Dict] = []

    def register(self, side: str, *specs):
        """
        Declare the model specs a side owns

        Args:
            side (str): 'bs' or 'ue'
            specs: ModelSpec, Network or Checkpoint objects
        """
        self._check_side(side)
        for item in specs:
            spec = self._spec_of(item)
            self.owned_specs[side][spec.spec_hash()] = spec.name
            logger.debug(f"🔐 {side} owns {spec.name} ({spec.spec_hash().hex()[:12]})")

    def validate_access(self, side: str, artifact) -> Dict[str, any]:
        """
        Decide whether a side may consume an artifact

        Args:
            side (str): 'bs' or 'ue'
            artifact: Pair dataset, dataset, model object or a path to one of the binary files

        Returns:
            Dict[str, any]: {'allowed', 'reason', 'kind', 'artifact'}
        """
        self._check_side(side)
        label = artifact if isinstance(artifact, (str, os.PathLike)) else type(artifact).__name__
        try:
            kind, payload = self._classify(artifact)
            result = self._rule(side, kind, payload)
        except (OSError, ValueError) as e:
            result = {'allowed': False, 'reason': f"Unreadable artifact: {e}"}
            kind = 'unknown'
        result.update({'kind': kind, 'artifact': str(label)})
        self.access_log.append(dict(result, side=side))

        if result['allowed']:
            logger.info(f"✅ {side} access approved: {kind} {label}")
        else:
            logger.warning(f"❌ {side} access REJECTED: {kind} {label}")
            logger.warning(f"   Reason: {result['reason']}")
        return result

    def require(self, side: str, artifact):
        result = self.validate_access(side, artifact)
        if not result['allowed']:
            raise IsolationViolation(side, result['artifact'], result['reason'])
        return result

    def _rule(self, side, kind, payload):
        other = UE_SIDE if side == BS_SIDE else BS_SIDE
        if kind == 'pairs':
            if payload not in _ACCEPTED_PRODUCERS[side]:
                return {'allowed': False, 'reason': f"pairs produced by {payload} are not part of the {side} exchange"}
            return {'allowed': True, 'reason': ''}
        if kind == 'dataset':
            if side == UE_SIDE:
                return {'allowed': False, 'reason': "the UE side trains on pair datasets only"}
            return {'allowed': True, 'reason': ''}
        if kind == 'model':
            spec_hash, name = payload
            if spec_hash in self.owned_specs[other]:
                return {'allowed': False, 'reason': f"{name} belongs to the {other} vendor"}
            if spec_hash not in self.owned_specs[side]:
                return {'allowed': False, 'reason': f"{name} is not registered to the {side} vendor"}
            return {'allowed': True, 'reason': ''}
        return {'allowed': False, 'reason': f"unsupported artifact kind {kind}"}

    def _classify(self, artifact):
        if isinstance(artifact, (str, os.PathLike)):
            return self._classify_file(os.fspath(artifact))
        if hasattr(artifact, 'producer') and hasattr(artifact, 'codewords'):
            return 'pairs', artifact.producer
        if hasattr(artifact, 'train') and hasattr(artifact, 'meta'):
            return 'dataset', None
        if hasattr(artifact, 'encoder') and hasattr(artifact, 'decoder'):
            raise ValueError("autoencoders span both vendors; pass encoder and decoder separately")
        spec = self._spec_of(artifact)
        return 'model', (spec.spec_hash(), spec.name)

    def _classify_file(self, path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Exchange artifact not found: {path}")
        with open(path, 'rb') as f:
            magic = f.read(4)
        if magic == PAIR_MAGIC:
            reader = BinaryReader.from_file(path, PAIR_MAGIC, PAIR_VERSION)
            reader.unpack('I')
            return 'pairs', reader.text()
        if magic == b'CSID':
            return 'dataset', None
        if magic == b'CSIK':
            spec = load_checkpoint(path).spec
            return 'model', (spec.spec_hash(), spec.name)
        raise ValueError(f"{path}: unknown file magic {magic!r}")

    @staticmethod
    def _spec_of(item) -> ModelSpec:
        if isinstance(item, ModelSpec):
            return item
        if isinstance(item, (Network, Checkpoint)):
            return item.spec
        raise ValueError(f"Cannot derive a model spec from {type(item).__name__}")

    @staticmethod
    def _check_side(side):
        if side not in SIDES:
            raise ValueError(f"Unknown protocol side '{side}' (expected one of {SIDES})")
