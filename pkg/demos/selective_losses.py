"""
Losses that only see acquired samples
=====================================

The training losses compare the synthesized image with the target only after
both are pushed through the target's sampling pattern. Anything the scanner
did not acquire is invisible to them, which is what lets a model train on
undersampled targets.
"""
import numpy as np

from ssmri.autograd import Tensor
from ssmri.kspace import generate_mask, ifft2c, to_pairs
from ssmri.losses import forward_model, selective_image_loss, selective_kspace_loss

rng = np.random.default_rng(0)
H = W = 64
mask = generate_mask(H, W, 4, (10, 10), seed=3).mask
maps = np.ones((1, H, W), np.complex64)  # single coil keeps the picture simple


def rand_image():
    return rng.standard_normal((H, W)) + 1j * rng.standard_normal((H, W))


target = forward_model(Tensor(to_pairs(rand_image())[None]), maps, mask)
y_hat = rand_image()


def losses(img):
    fake = forward_model(Tensor(to_pairs(img)[None]), maps, mask)
    return selective_image_loss(fake, target).item(), selective_kspace_loss(fake, target).item()


print("base losses        L_i %.6f  L_k %.8f" % losses(y_hat))

# %%
# A large change confined to unacquired frequencies leaves both losses unchanged
# (up to float32 rounding).
hidden = ifft2c(10 * rand_image() * ~mask)
print("unacquired change  L_i %.6f  L_k %.8f" % losses(y_hat + hidden))

# %%
# The same energy placed on acquired frequencies moves them immediately.
visible = ifft2c(10 * rand_image() * mask)
print("acquired change    L_i %.6f  L_k %.8f" % losses(y_hat + visible))
