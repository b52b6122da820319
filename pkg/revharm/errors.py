# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

import numpy as np


class RevharmError(Exception):
    """Base class of every error raised by revharm"""


class MeshError(RevharmError, ValueError):
    """
    A mesh (or a file describing one) is not usable.

    The offending face ids are available as ``faces`` when known.
    """

    def __init__(self, message, faces=None):
        super().__init__(message)
        self.faces = None if faces is None else np.asarray(faces, dtype=np.int64)


class MapError(RevharmError, ValueError):
    """A precise map, landmark set or functional map is invalid"""


class NumericalError(RevharmError, ArithmeticError):
    """A linear solve or eigen decomposition failed, or an iterate is not finite"""
