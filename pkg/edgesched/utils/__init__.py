import json
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel


class CustomJsonEncoder(json.JSONEncoder):
    """
    A JSONEncoder that handles numpy scalars/arrays, pydantic models and paths.
    Infinite floats are written as the strings "inf"/"-inf" so the output
    stays strict JSON.
    """

    def default(self, obj):
        if isinstance(obj, BaseModel):
            return _replace_infinities(obj.model_dump(mode="python"))
        if isinstance(obj, np.ndarray):
            return _replace_infinities(obj.tolist())
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, Path):
            return str(obj)
        try:
            return obj.__dict__
        except AttributeError:
            return super().default(obj)

    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_replace_infinities(o), _one_shot)


def _replace_infinities(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {k: _replace_infinities(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_replace_infinities(v) for v in obj]
    return obj
