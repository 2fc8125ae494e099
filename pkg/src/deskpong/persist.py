"""Model and dataset persistence.

File format ("PPTT"): a structured-text header describing the model kind,
its networks (layer sizes, output activation) and scalar attributes,
followed by little-endian float32 parameter arrays in declaration order.
The payload digest is stored in the header, so corruption and truncation
are detected; save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .control import BallControlPolicy, ControlStack, MixerPolicy
from .imitation import ImitationBundle
from .metrics import EvalDiscriminatorSet
from .nn import GaussianPolicy, Mlp
from .refs import ReferenceClip, ReferenceSet, SkillId
from .strategy import CvaeModel, RlStrategy, make_rl_strategy

MAGIC = b"PPTT"
FORMAT_VERSION = 1

KNOWN_KINDS = (
    "imitation_bundle",
    "ball_control",
    "mixer",
    "cvae_strategy",
    "rl_strategy",
    "eval_discriminators",
    "reference_set",
)


class ModelFileError(ValueError):
    """Base for persistence failures."""


class CorruptModelError(ModelFileError):
    pass


class UnsupportedKindError(ModelFileError):
    pass


@dataclass
class ModelFile:
    kind: str
    header: dict[str, str]
    arrays: dict[str, np.ndarray]


def _serialize(kind: str, header: dict[str, str], arrays: dict[str, np.ndarray]) -> bytes:
    payload = io.BytesIO()
    order = list(arrays.keys())
    for name in order:
        payload.write(np.ascontiguousarray(arrays[name], dtype="<f4").tobytes())
    blob = payload.getvalue()
    digest = hashlib.sha256(blob).hexdigest()

    head = io.StringIO()
    head.write(f"version {FORMAT_VERSION}\n")
    head.write(f"kind {kind}\n")
    for key in sorted(header):
        value = str(header[key])
        if "\n" in value:
            raise ModelFileError(f"header value for {key!r} must be single-line")
        head.write(f"meta {key} {value}\n")
    for name in order:
        shape = ",".join(str(d) for d in arrays[name].shape)
        head.write(f"array {name} {shape}\n")
    head.write(f"digest {digest}\n")
    head.write("end-header\n")
    return MAGIC + b"\n" + head.getvalue().encode() + blob


def save_file(path: str | os.PathLike, model: ModelFile) -> None:
    """Atomic write (temp file + rename)."""
    if model.kind not in KNOWN_KINDS:
        raise UnsupportedKindError(f"unknown model kind {model.kind!r}")
    data = _serialize(model.kind, model.header, model.arrays)
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_file(path: str | os.PathLike) -> ModelFile:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC + b"\n"):
        raise CorruptModelError("bad magic")
    try:
        header_end = data.index(b"end-header\n")
    except ValueError:
        raise CorruptModelError("missing header terminator") from None
    head_text = data[len(MAGIC) + 1 : header_end].decode()
    blob = data[header_end + len(b"end-header\n") :]

    kind = ""
    version = None
    header: dict[str, str] = {}
    order: list[tuple[str, tuple[int, ...]]] = []
    digest = None
    for line in head_text.splitlines():
        tag, _, rest = line.partition(" ")
        if tag == "version":
            version = int(rest)
        elif tag == "kind":
            kind = rest
        elif tag == "meta":
            key, _, value = rest.partition(" ")
            header[key] = value
        elif tag == "array":
            name, _, shape = rest.partition(" ")
            dims = tuple(int(d) for d in shape.split(",")) if shape else ()
            order.append((name, dims))
        elif tag == "digest":
            digest = rest
    if version != FORMAT_VERSION:
        raise CorruptModelError(f"unsupported format version {version}")
    if kind not in KNOWN_KINDS:
        raise UnsupportedKindError(f"unknown model kind {kind!r}")
    if digest is None or hashlib.sha256(blob).hexdigest() != digest:
        raise CorruptModelError("payload digest mismatch")

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, dims in order:
        count = int(np.prod(dims)) if dims else 1
        nbytes = count * 4
        if offset + nbytes > len(blob):
            raise CorruptModelError("payload truncated")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays[name] = arr.reshape(dims).astype(np.float64)
        offset += nbytes
    if offset != len(blob):
        raise CorruptModelError("trailing bytes in payload")
    return ModelFile(kind, header, arrays)


# -- net packing -------------------------------------------------------


def _pack_mlp(prefix: str, net: Mlp, header: dict, arrays: dict) -> None:
    header[f"{prefix}.sizes"] = ",".join(str(s) for s in net.layer_sizes)
    header[f"{prefix}.activation"] = net.out_activation
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"{prefix}.w{i}"] = w.data
        arrays[f"{prefix}.b{i}"] = b.data


def _unpack_mlp(prefix: str, header: dict, arrays: dict) -> Mlp:
    sizes = [int(s) for s in header[f"{prefix}.sizes"].split(",")]
    net = Mlp(sizes, out_activation=header[f"{prefix}.activation"])
    for i in range(len(sizes) - 1):
        net.weights[i].data = arrays[f"{prefix}.w{i}"].copy()
        net.biases[i].data = arrays[f"{prefix}.b{i}"].copy()
    return net


# -- typed save/load ---------------------------------------------------


def save_bundle(path, bundle: ImitationBundle, config_digest: str = "") -> None:
    header = {
        "skill": str(bundle.skill if bundle.skill is not None else "universal"),
        "latent_dim": str(bundle.latent_dim),
        "sigma_sq": repr(bundle.policy.sigma_sq),
        "config_digest": config_digest,
    }
    arrays: dict[str, np.ndarray] = {}
    _pack_mlp("policy", bundle.policy.mean_net, header, arrays)
    _pack_mlp("value", bundle.value_net, header, arrays)
    _pack_mlp("disc_enc", bundle.disc_enc, header, arrays)
    save_file(path, ModelFile("imitation_bundle", header, arrays))


def load_bundle(path) -> ImitationBundle:
    mf = load_file(path)
    if mf.kind != "imitation_bundle":
        raise UnsupportedKindError(f"expected imitation_bundle, got {mf.kind}")
    skill_s = mf.header["skill"]
    skill = None if skill_s == "universal" else int(skill_s)
    policy = GaussianPolicy(_unpack_mlp("policy", mf.header, mf.arrays), float(mf.header["sigma_sq"]))
    return ImitationBundle(
        skill=skill,
        policy=policy,
        value_net=_unpack_mlp("value", mf.header, mf.arrays),
        disc_enc=_unpack_mlp("disc_enc", mf.header, mf.arrays),
        latent_dim=int(mf.header["latent_dim"]),
    )


def save_ball_control(path, bc: BallControlPolicy, config_digest: str = "") -> None:
    header = {
        "skill": str(bc.skill),
        "sigma_sq": repr(bc.policy.sigma_sq),
        "config_digest": config_digest,
    }
    arrays: dict[str, np.ndarray] = {}
    _pack_mlp("policy", bc.policy.mean_net, header, arrays)
    _pack_mlp("value", bc.value_net, header, arrays)
    save_file(path, ModelFile("ball_control", header, arrays))


def load_ball_control(path) -> BallControlPolicy:
    mf = load_file(path)
    if mf.kind != "ball_control":
        raise UnsupportedKindError(f"expected ball_control, got {mf.kind}")
    policy = GaussianPolicy(_unpack_mlp("policy", mf.header, mf.arrays), float(mf.header["sigma_sq"]))
    return BallControlPolicy(
        int(mf.header["skill"]), policy, _unpack_mlp("value", mf.header, mf.arrays)
    )


def save_mixer(path, mixer: MixerPolicy, config_digest: str = "") -> None:
    header = {
        "latent_dim": str(mixer.latent_dim),
        "sigma_sq": repr(mixer.policy.sigma_sq),
        "config_digest": config_digest,
    }
    arrays: dict[str, np.ndarray] = {}
    _pack_mlp("policy", mixer.policy.mean_net, header, arrays)
    _pack_mlp("value", mixer.value_net, header, arrays)
    save_file(path, ModelFile("mixer", header, arrays))


def load_mixer(path) -> MixerPolicy:
    mf = load_file(path)
    if mf.kind != "mixer":
        raise UnsupportedKindError(f"expected mixer, got {mf.kind}")
    policy = GaussianPolicy(_unpack_mlp("policy", mf.header, mf.arrays), float(mf.header["sigma_sq"]))
    return MixerPolicy(
        policy, _unpack_mlp("value", mf.header, mf.arrays), int(mf.header["latent_dim"])
    )


def save_cvae(path, model: CvaeModel, config_digest: str = "") -> None:
    header = {
        "latent_dim": str(model.latent_dim),
        "version_tag": model.version,
        "config_digest": config_digest,
    }
    arrays: dict[str, np.ndarray] = {}
    _pack_mlp("encoder", model.encoder, header, arrays)
    _pack_mlp("decoder", model.decoder, header, arrays)
    save_file(path, ModelFile("cvae_strategy", header, arrays))


def load_cvae(path) -> CvaeModel:
    mf = load_file(path)
    if mf.kind != "cvae_strategy":
        raise UnsupportedKindError(f"expected cvae_strategy, got {mf.kind}")
    return CvaeModel(
        _unpack_mlp("encoder", mf.header, mf.arrays),
        _unpack_mlp("decoder", mf.header, mf.arrays),
        int(mf.header["latent_dim"]),
        version=mf.header.get("version_tag", "v0"),
    )


def save_rl_strategy(path, strat: RlStrategy, config_digest: str = "") -> None:
    header = {"sigma_sq": repr(strat.policy.sigma_sq), "config_digest": config_digest}
    arrays: dict[str, np.ndarray] = {}
    _pack_mlp("policy", strat.policy.mean_net, header, arrays)
    _pack_mlp("value", strat.value_net, header, arrays)
    save_file(path, ModelFile("rl_strategy", header, arrays))


def load_rl_strategy(path) -> RlStrategy:
    mf = load_file(path)
    if mf.kind != "rl_strategy":
        raise UnsupportedKindError(f"expected rl_strategy, got {mf.kind}")
    policy = GaussianPolicy(_unpack_mlp("policy", mf.header, mf.arrays), float(mf.header["sigma_sq"]))
    return RlStrategy(policy, _unpack_mlp("value", mf.header, mf.arrays))


def save_eval_discriminators(path, eval_set: EvalDiscriminatorSet, config_digest: str = "") -> None:
    header = {"config_digest": config_digest}
    arrays: dict[str, np.ndarray] = {}
    for skill, net in sorted(eval_set.nets.items()):
        _pack_mlp(f"disc{skill}", net, header, arrays)
    save_file(path, ModelFile("eval_discriminators", header, arrays))


def load_eval_discriminators(path) -> EvalDiscriminatorSet:
    mf = load_file(path)
    if mf.kind != "eval_discriminators":
        raise UnsupportedKindError(f"expected eval_discriminators, got {mf.kind}")
    nets = {s: _unpack_mlp(f"disc{s}", mf.header, mf.arrays) for s in (1, 2, 3, 4, 5)}
    return EvalDiscriminatorSet(nets)


def save_reference_set(path, refs: ReferenceSet, config_digest: str = "") -> None:
    header = {"n_clips": str(len(refs.clips)), "config_digest": config_digest}
    arrays: dict[str, np.ndarray] = {}
    for i, clip in enumerate(refs.clips):
        header[f"clip{i}.skill"] = str(int(clip.skill))
        arrays[f"clip{i}.angles"] = clip.angles
        arrays[f"clip{i}.velocities"] = clip.velocities
        arrays[f"clip{i}.latents"] = clip.latents
    save_file(path, ModelFile("reference_set", header, arrays))


def load_reference_set(path, cfg=None) -> ReferenceSet:
    mf = load_file(path)
    if mf.kind != "reference_set":
        raise UnsupportedKindError(f"expected reference_set, got {mf.kind}")
    clips = []
    for i in range(int(mf.header["n_clips"])):
        clips.append(
            ReferenceClip(
                SkillId(int(mf.header[f"clip{i}.skill"])),
                mf.arrays[f"clip{i}.angles"],
                mf.arrays[f"clip{i}.velocities"],
                mf.arrays[f"clip{i}.latents"],
            )
        )
    return ReferenceSet(clips, cfg)


# -- control stacks ----------------------------------------------------


def save_stack(model_dir, stack: ControlStack, config_digest: str = "") -> None:
    os.makedirs(model_dir, exist_ok=True)
    for skill, bundle in stack.bundles.items():
        save_bundle(os.path.join(model_dir, f"imitation_s{skill}.pptt"), bundle, config_digest)
    save_bundle(os.path.join(model_dir, "imitation_universal.pptt"), stack.universal, config_digest)
    for skill, bc in stack.ball_controls.items():
        save_ball_control(os.path.join(model_dir, f"ballctl_s{skill}.pptt"), bc, config_digest)
    if stack.mixer is not None:
        save_mixer(os.path.join(model_dir, "mixer.pptt"), stack.mixer, config_digest)


def load_stack(model_dir) -> ControlStack:
    bundles = {
        s: load_bundle(os.path.join(model_dir, f"imitation_s{s}.pptt")) for s in (1, 2, 3, 4, 5)
    }
    universal = load_bundle(os.path.join(model_dir, "imitation_universal.pptt"))
    ball_controls = {
        s: load_ball_control(os.path.join(model_dir, f"ballctl_s{s}.pptt"))
        for s in (1, 2, 3, 4, 5)
    }
    mixer_path = os.path.join(model_dir, "mixer.pptt")
    mixer = load_mixer(mixer_path) if os.path.exists(mixer_path) else None
    return ControlStack(bundles, universal, ball_controls, mixer)
