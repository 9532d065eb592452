import pytest

from gpuharness import load_model_entry


def model_toml(model_id, family, **over):
    """A planner-format model file, sized so CPU steps take milliseconds."""
    fields = {
        "id": model_id,
        "family": family,
        "param_count": 2.0e5,
        "num_layers": 2,
        "hidden_dim": 64,
        "num_heads": 4,
        "seq_len": 32,
        "image_size": 0,
        "vocab_size": 512,
        "num_classes": 0,
        "global_batch_size": 64,
        "training_steps": 1000,
        "precision": "fp32",
        "optimizer": "adam",
        "supports_compile": True,
        "supports_custom_kernels": True,
        "training_flops_est": 0.0,
    }
    fields.update(over)
    lines = []
    for key, val in fields.items():
        if isinstance(val, bool):
            lines.append(f"{key} = {'true' if val else 'false'}")
        elif isinstance(val, str):
            lines.append(f'{key} = "{val}"')
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


MODEL_TOMLS = {
    "tiny-dec": model_toml("tiny-dec", "decoder"),
    "tiny-enc": model_toml("tiny-enc", "encoder"),
    "tiny-vit": model_toml("tiny-vit", "vit", seq_len=0, image_size=32,
                           vocab_size=0, num_classes=10),
    "tiny-conv": model_toml("tiny-conv", "conv", seq_len=0, image_size=32,
                            vocab_size=0, num_classes=10, num_heads=0),
    "tiny-ssm": model_toml("tiny-ssm", "ssm", num_heads=0),
}


@pytest.fixture(scope="session")
def catalog_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("catalog")
    (root / "models").mkdir()
    for name, text in MODEL_TOMLS.items():
        (root / "models" / f"{name}.toml").write_text(text)
    return root


@pytest.fixture(scope="session")
def tiny_decoder(catalog_dir):
    return load_model_entry(catalog_dir, "tiny-dec")
