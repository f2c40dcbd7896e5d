"""Stateful layers wrapping the functional ops with forward caches."""
import numpy as np

from ..core import ops
from ..core.params import Parameter
from ..errors import StateError


class Layer:
    kind = "layer"

    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, c_in, c_out, kernel, stride, pad, rng, dtype, name):
        super().__init__()
        s = np.sqrt(6.0 / (c_in * kernel * kernel + c_out * kernel * kernel))
        self.w = Parameter(rng.uniform(-s, s, (c_out, c_in, kernel, kernel)).astype(dtype),
                           name=f"{name}.w")
        self.b = Parameter(np.zeros(c_out, dtype), name=f"{name}.b")
        self.stride = stride
        self.pad = pad

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x, training=False, rng=None):
        out, cols = ops.conv2d(x, self.w.value, self.b.value, self.stride, self.pad,
                               return_cols=True)
        self._cache = (x, cols)
        return out

    def backward(self, grad, input_grad=True):
        x, cols = self._take_cache()
        gx, gw, gb = ops.conv2d_backward(grad, x, self.w.value, self.stride, self.pad,
                                         cols=cols, input_grad=input_grad)
        self.w.accumulate(gw)
        self.b.accumulate(gb)
        return gx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return ops.relu(x)

    def backward(self, grad):
        return ops.relu_backward(grad, self._take_cache())


class MaxPool2D(Layer):
    kind = "pool"

    def __init__(self, window, stride):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, x, training=False, rng=None):
        out, idx = ops.maxpool2d(x, self.window, self.stride)
        self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        idx, shape = self._take_cache()
        return ops.maxpool2d_backward(grad, idx, shape, self.window, self.stride)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng, dtype, name, learn_rate_scale=1.0):
        super().__init__()
        s = np.sqrt(6.0 / (n_in + n_out))
        self.w = Parameter(rng.uniform(-s, s, (n_out, n_in)).astype(dtype), name=f"{name}.w",
                           learn_rate_scale=learn_rate_scale)
        self.b = Parameter(np.zeros(n_out, dtype), name=f"{name}.b",
                           learn_rate_scale=learn_rate_scale)

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return ops.dense(x, self.w.value, self.b.value)

    def backward(self, grad):
        gx, gw, gb = ops.dense_backward(grad, self._take_cache(), self.w.value)
        self.w.accumulate(gw)
        self.b.accumulate(gb)
        return gx


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if training and self.rate > 0 and rng is None:
            raise ValueError("training-mode dropout needs a random stream")
        out, mask = ops.dropout(x, self.rate, rng, training)
        self._cache = (mask,)
        return out

    def backward(self, grad):
        (mask,) = self._take_cache()
        return ops.dropout_backward(grad, mask)


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, grad, input_grad=True):
        """Backpropagate; with ``input_grad=False`` a leading convolution skips
        its (unused) input gradient and ``None`` may be returned."""
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i == 0 and not input_grad and isinstance(layer, Conv2D):
                return layer.backward(grad, input_grad=False)
            grad = layer.backward(grad)
        return grad
