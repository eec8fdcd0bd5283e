import numpy as np


class BlockToeplitzOperator:
    """
    Block-Toeplitz-with-Toeplitz-blocks operator on an n x n grid.

    The kernel holds the value for every cell displacement (p, q), |p|, |q| < n, stored
    with zero displacement at index (n - 1, n - 1). Products use a 2n x 2n circulant
    embedding and 2-D FFTs, so a matvec costs O(N log N) with N = n^2.
    """

    def __init__(self, kernel):
        kernel = np.asarray(kernel)
        size = kernel.shape[0]
        if kernel.ndim != 2 or kernel.shape[1] != size or size % 2 == 0:
            raise ValueError(f"kernel must be (2n-1, 2n-1), got {kernel.shape}")
        self.grid_n = (size + 1) // 2
        self.kernel = kernel
        self.shape = (self.grid_n ** 2, self.grid_n ** 2)
        self.dtype = np.result_type(kernel.dtype, np.complex128)
        self.circ_fft = np.fft.fft2(self._cyclic_extend(kernel, self.grid_n))

    @staticmethod
    def _cyclic_extend(kernel, n):
        circ = np.zeros((2 * n, 2 * n), dtype=kernel.dtype)
        c = n - 1
        circ[:n, :n] = kernel[c:, c:]
        circ[:n, n + 1:] = kernel[c:, :c]
        circ[n + 1:, :n] = kernel[:c, c:]
        circ[n + 1:, n + 1:] = kernel[:c, :c]
        return circ

    def entry(self, m, k):
        n = self.grid_n
        return self.kernel[m // n - k // n + n - 1, m % n - k % n + n - 1]

    def matvec(self, x):
        n = self.grid_n
        x = np.asarray(x).reshape(n, n)
        x_fft = np.fft.fft2(x, s=(2 * n, 2 * n))
        return np.fft.ifft2(self.circ_fft * x_fft)[:n, :n].ravel()

    def dense(self):
        n = self.grid_n
        idx = np.arange(n * n)
        rows, cols = idx // n, idx % n
        dp = rows[:, None] - rows[None, :] + n - 1
        dq = cols[:, None] - cols[None, :] + n - 1
        return self.kernel[dp, dq]
