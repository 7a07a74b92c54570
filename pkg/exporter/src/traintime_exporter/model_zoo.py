"""Small builtin models for exporting and profiling.

The zoo exists so the command-line tools can exercise the full pipeline
without any user checkpoint. Real models work with ``export_graph`` too as
long as they trace under torch.fx; mark tensor-parallel-sliceable projection
weights by setting ``tp_slice_dim`` on the owning module (0 slices output
features of an ``nn.Linear``, 1 slices input features).
"""

import torch
from torch import nn

from .errors import UnknownModel


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.qkv = nn.Linear(d_model, d_model, bias=False)
        self.attn_out = nn.Linear(d_model, d_model, bias=False)
        self.norm = nn.LayerNorm(d_model)
        self.mlp_in = nn.Linear(d_model, d_ff, bias=False)
        self.mlp_out = nn.Linear(d_ff, d_model, bias=False)
        # Megatron-style sharding: column-parallel going up, row-parallel
        # coming back down
        self.qkv.tp_slice_dim = 0
        self.attn_out.tp_slice_dim = 1
        self.mlp_in.tp_slice_dim = 0
        self.mlp_out.tp_slice_dim = 1

    def forward(self, x):
        a = torch.softmax(self.qkv(x), dim=-1)
        x = self.norm(x + self.attn_out(a))
        return x + self.mlp_out(torch.relu(self.mlp_in(x)))


class ToyTransformer(nn.Module):
    """Stack of identical blocks; one block is one pipeline layer.

    Input is a pre-embedded float tensor (batch, seq, d_model), so the traced
    graph contains block operators only and its layer count equals the block
    count.
    """

    def __init__(self, layers: int = 2, d_model: int = 64, d_ff: int = 128):
        super().__init__()
        if layers < 1:
            raise UnknownModel("toy-transformer needs at least one layer")
        self.blocks = nn.ModuleList(TransformerBlock(d_model, d_ff) for _ in range(layers))
        self.d_model = d_model

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


ZOO = {"toy-transformer": ToyTransformer}


def build_model(name: str, layers: int, d_model: int, d_ff: int) -> nn.Module:
    try:
        factory = ZOO[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; available: {sorted(ZOO)}") from None
    return factory(layers=layers, d_model=d_model, d_ff=d_ff)


def example_input(model: nn.Module, batch_size: int, seq_len: int) -> torch.Tensor:
    if batch_size < 1 or seq_len < 1:
        raise UnknownModel("batch size and sequence length must be positive")
    return torch.randn(batch_size, seq_len, model.d_model)
