from typing import List, Optional, Tuple
import numpy as np

from ..core.config import settings
from ..core.logging import app_logger
from ..models.activation import ActivationKind
from ..models.engine import LayerKind
from ..models.fxp import FxPFormat
from ..models.network import Dataset, LayerSpec, ModelSpec

# 5x7 digit font, one string per row
_FONT = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}

IMAGE_SIZE = 14
NUM_CLASSES = 10
HIDDEN_COMPONENTS = (32, 16, 16)
COMPONENT_SCALE = 0.6
RIDGE = 1.0
DROPOUT = 0.1
SALT = 0.03


def _glyph(digit: int) -> np.ndarray:
    rows = np.array([[int(c) for c in row] for row in _FONT[digit]], dtype=np.float64)
    return np.kron(rows, np.ones((2, 2)))


class FixtureService:
    """Deterministic desk-scale digit data and a closed-form 196-64-32-32-10 MLP."""

    @staticmethod
    def render(digits, rng: np.random.Generator) -> np.ndarray:
        """Binary 14x14 images, flattened, with random shift, stroke dropout and salt noise."""
        images = np.zeros((len(digits), IMAGE_SIZE, IMAGE_SIZE))
        for i, d in enumerate(digits):
            glyph = _glyph(int(d))
            shift = int(rng.integers(-1, 2))
            col = (IMAGE_SIZE - glyph.shape[1]) // 2 + shift
            images[i, :, col:col + glyph.shape[1]] = glyph
        keep = rng.random(images.shape) >= DROPOUT
        salt = rng.random(images.shape) < SALT
        images = np.where(salt, 1.0, images * keep)
        return images.reshape(len(digits), -1)

    @staticmethod
    def dataset(count: int, seed: int, name: str) -> Dataset:
        rng = np.random.default_rng(seed)
        labels = np.arange(count) % NUM_CLASSES
        rng.shuffle(labels)
        return Dataset(name, FixtureService.render(labels, rng), labels.astype(np.int64), NUM_CLASSES)

    @staticmethod
    def _paired_projection(h: np.ndarray, components: int) -> Tuple[np.ndarray, np.ndarray]:
        # +/- copies of the leading principal directions, each scaled to a fixed spread
        mean = h.mean(axis=0)
        _, _, vt = np.linalg.svd(h - mean, full_matrices=False)
        v = vt[:components]
        # Sign convention keeps the fixture stable across LAPACK builds
        v = v * np.where(v[np.arange(len(v)), np.argmax(np.abs(v), axis=1)] < 0, -1.0, 1.0)[:, None]
        sigma = ((h - mean) @ v.T).std(axis=0)
        v = v * (COMPONENT_SCALE / np.maximum(sigma, 1e-12))[:, None]
        w = np.vstack([v, -v])
        return w, -w @ mean

    @staticmethod
    def build_model(train: Dataset, fmt: Optional[FxPFormat] = None) -> ModelSpec:
        fmt = fmt or FxPFormat.default(8)
        h = train.samples
        layers: List[LayerSpec] = []
        for k in HIDDEN_COMPONENTS:
            w, b = FixtureService._paired_projection(h, k)
            layers.append(LayerSpec(kind=LayerKind.DENSE, n_out=w.shape[0], n_in=w.shape[1],
                                    activation=ActivationKind.RELU, format=fmt, weights=w, bias=b))
            h = np.maximum(h @ w.T + b, 0.0)

        # Ridge readout on centred one-hot targets
        targets = np.eye(NUM_CLASSES)[train.labels] - 1.0 / NUM_CLASSES
        mean = h.mean(axis=0)
        hc = h - mean
        w = np.linalg.solve(hc.T @ hc + RIDGE * np.eye(hc.shape[1]), hc.T @ targets).T
        b = targets.mean(axis=0) - w @ mean
        layers.append(LayerSpec(kind=LayerKind.DENSE, n_out=NUM_CLASSES, n_in=w.shape[1],
                                activation=ActivationKind.NONE, format=fmt, weights=w, bias=b))
        return ModelSpec(name="digits-mlp", input_dim=IMAGE_SIZE * IMAGE_SIZE, layers=layers)

    @staticmethod
    def build(train_count: int = 2000, test_count: int = 600, seed: Optional[int] = None):
        """Returns (model, train, test)."""
        seed = settings.DEFAULT_SEED if seed is None else seed
        train = FixtureService.dataset(train_count, seed, "digits-train")
        test = FixtureService.dataset(test_count, seed + 1, "digits-test")
        model = FixtureService.build_model(train)
        app_logger.info(f"Built fixture: {train_count} train / {test_count} test samples, "
                        f"topology {model.input_dim}-" + "-".join(str(l.n_out) for l in model.layers))
        return model, train, test
