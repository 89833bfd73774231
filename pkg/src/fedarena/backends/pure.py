"""Pure-numpy MLP kernels: forward pass and loss/gradient computation.

This is the reference backend. The Cython backend in ``_kernels.pyx``
implements the same two entry points with hand-rolled loops.
"""

import numpy as np

NAME = "python"


def _stable_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mlp_forward(inputs, weights, biases):
    """Forward pass through ReLU hidden layers; last layer returns raw logits."""
    a = inputs
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        a = z if k == last else np.maximum(z, 0.0)
    return a


def mlp_loss_grads(inputs, labels, weights, biases):
    """Mean softmax cross-entropy loss plus exact gradients.

    Returns (loss, grad_weights, grad_biases, grad_inputs). The ReLU
    subgradient at 0 is taken as 0.
    """
    n = inputs.shape[0]
    last = len(weights) - 1

    activations = [inputs]
    pre = []
    a = inputs
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        activations.append(a)

    logits = activations[-1]
    probs = _stable_softmax(logits)
    rows = np.arange(n)
    # log-softmax evaluated directly for numerical stability
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[rows, labels].mean()

    delta = probs.copy()
    delta[rows, labels] -= 1.0
    delta /= n

    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    for k in range(last, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = delta.sum(axis=0)
        delta = delta @ weights[k]
        if k > 0:
            delta = delta * (pre[k - 1] > 0)
    grad_inputs = delta
    return loss, grad_w, grad_b, grad_inputs
