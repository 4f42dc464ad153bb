#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import logging
import math
from typing import Optional

from models import TrainConfig

logger = logging.getLogger(__name__)

STOP_EARLY = 'early_stopping'
STOP_MAX_EPOCHS = 'max_epochs'
STOP_BUDGET = 'budget'


class ScheduleManager:
    """
    Learning-rate schedule and early-stopping bookkeeping for one training phase
    Epochs are 1-indexed: epoch `lr_drop_epoch` still uses the initial rate
    """

    def __init__(self, config: TrainConfig, max_epochs: Optional[int] = None, fixed_lr: Optional[float] = None,
                 phase: str = 'train'):
        self.config = config
        self.max_epochs = int(config.max_epochs if max_epochs is None else max_epochs)
        self.fixed_lr = fixed_lr
        self.phase = phase
        self.best_loss = math.inf
        self.best_epoch = 0
        self.last_epoch = 0
        self.stop_reason = None
        self._dropped_logged = False

    def learning_rate(self, epoch: int) -> float:
        """
        Learning rate for a 1-indexed epoch

        Args:
            epoch (int): Epoch number starting at 1

        Returns:
            float: initial_lr up to and including lr_drop_epoch, dropped_lr afterwards
        """
        if epoch < 1:
            raise ValueError(f"Epochs are 1-indexed, got {epoch}")
        if self.fixed_lr is not None:
            return float(self.fixed_lr)
        if epoch <= self.config.lr_drop_epoch:
            return float(self.config.initial_lr)
        if not self._dropped_logged:
            logger.info(f"📉 [{self.phase}] Learning rate dropped to {self.config.dropped_lr:g} at epoch {epoch}")
            self._dropped_logged = True
        return float(self.config.dropped_lr)

    def record(self, epoch: int, val_loss: float) -> bool:
        """
        Register the validation loss of an epoch

        Returns:
            bool: True when this epoch is a new strict best
        """
        self.last_epoch = epoch
        if val_loss < self.best_loss:
            self.best_loss = float(val_loss)
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self) -> bool:
        if self.last_epoch - self.best_epoch >= self.config.patience:
            self.stop_reason = STOP_EARLY
            logger.info(f"⏹️ [{self.phase}] Early stop at epoch {self.last_epoch}: no improvement since "
                        f"epoch {self.best_epoch} ({self.config.patience} epochs)")
            return True
        if self.last_epoch >= self.max_epochs:
            self.stop_reason = STOP_BUDGET if self.fixed_lr is not None else STOP_MAX_EPOCHS
            return True
        return False

    def epochs(self):
        """Iterate epoch numbers until a stop condition fires"""
        epoch = 0
        while epoch < self.max_epochs:
            epoch += 1
            yield epoch
            if self.should_stop():
                return
        if self.stop_reason is None:
            self.stop_reason = STOP_BUDGET if self.fixed_lr is not None else STOP_MAX_EPOCHS
