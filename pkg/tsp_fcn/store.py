import hashlib
import logging
import re
from functools import partial
from typing import Iterable, List, Optional

from .exceptions import (
    DatasetError,
    SampleNotExistError,
    SizeLimitError,
    SplitNameError,
    SplitRemoveDefaultError,
)
from .instance import TspInstance, generate_instance, instance_to_dict
from .jobs import map_jobs
from .raster import RenderConfig, Sample, render_sample
from .solvers import SIZE_LIMITS, solve
from .store_client import DEFAULT_SPLIT, DiskClient

logger = logging.getLogger(__name__)

_SPLIT_NAME = re.compile(r"^[A-Za-z0-9_-]{1,32}$")


class DatasetStore:
    """
    dict-like view of a dataset, one split (train, test, ...) at a time

    store["n10-s3-00000"] = sample
    store.set_split("test")
    """

    def __init__(self, path=None, split=DEFAULT_SPLIT, ClientClass=DiskClient):
        self.path = path
        self.split = DEFAULT_SPLIT
        self.client = ClientClass(path)
        self.set_split(split)

    ##########################################################################################
    # CORE FUNCTIONS
    ##########################################################################################
    def __setitem__(self, sample_id, sample):
        if sample_id != sample.instance.id:
            raise DatasetError(f"Key {sample_id} does not match sample id {sample.instance.id}")
        self.add(sample)

    def __getitem__(self, sample_id):
        return self.get(sample_id)

    def __delitem__(self, sample_id):
        return self.remove(sample_id)

    def __contains__(self, sample_id):
        return self.exists(sample_id)

    def __len__(self):
        return len(self.ids())

    def __iter__(self):
        return iter(self.ids())

    def add(self, sample: Sample):
        """
        put a sample into the current split, replacing one with the same id

        Errors:
            DatasetError
        """
        if not isinstance(sample, Sample):
            raise DatasetError(f"Expected a Sample, got {type(sample)}")
        self.client.put(self.split, sample)

    def get(self, sample_id: str) -> Sample:
        """
        Errors:
            SampleNotExistError
        """
        if not self.exists(sample_id):
            raise SampleNotExistError(f"Sample {sample_id} does not exist in split {self.split}")
        return self.client.get(self.split, sample_id)

    def exists(self, sample_id: str) -> bool:
        return self.client.contains(self.split, sample_id)

    def remove(self, sample_id: str):
        """delete a sample; does nothing if it does not exist"""
        if self.exists(sample_id):
            self.client.delete(self.split, sample_id)

    def ids(self, split=None) -> List[str]:
        """sample ids in insertion order, in the current split or in split"""
        return self.client.list(split or self.split)

    def samples(self) -> List[Sample]:
        return [self.client.get(self.split, i) for i in self.ids()]

    def instances(self) -> List[TspInstance]:
        return [s.instance for s in self.samples()]

    ##########################################################################################
    # SPLITS
    ##########################################################################################
    def set_split(self, split=None) -> str:
        """
        either return the current split or switch to another one

        Errors:
            SplitNameError
        """
        if split is None:
            return self.split
        if not _SPLIT_NAME.match(split):
            raise SplitNameError(f"Split name {split!r} must be 1-32 letters, digits, - or _")
        self.split = split
        self.client.create_split(split)
        return self.split

    def splits(self) -> set:
        return self.client.splits()

    def remove_split(self, split=None) -> str:
        """
        remove a split and all its samples

        Errors:
            SplitRemoveDefaultError
            SplitNameError
        """
        split = split or self.split
        if split == DEFAULT_SPLIT:
            raise SplitRemoveDefaultError("Cannot remove the default split")
        if split not in self.splits():
            raise SplitNameError(f"Split {split!r} does not exist")
        self.client.drop_split(split)
        if self.split == split:
            self.split = DEFAULT_SPLIT
        return f"Deleted split {split}. Using split {self.split}."

    ##########################################################################################
    # MANIFEST
    ##########################################################################################
    def manifest(self) -> Optional[dict]:
        return self.client.read_manifest(self.split)

    def write_manifest(self, manifest: dict):
        self.client.write_manifest(self.split, manifest)

    def render_config(self) -> Optional[RenderConfig]:
        manifest = self.manifest()
        if manifest and "render" in manifest:
            return RenderConfig.from_dict(manifest["render"])
        return None

    def digest(self) -> str:
        """blake2b fingerprint of every instance, image and label of the current split"""
        h = hashlib.blake2b(digest_size=20)
        for sample in self.samples():
            h.update(repr(sorted(instance_to_dict(sample.instance).items())).encode())
            h.update(sample.image.pixels.tobytes())
            if sample.label is not None:
                h.update(sample.label.classes.tobytes())
        return h.hexdigest()


def file_digest(path, digest_bytes: int = 20) -> str:
    h = hashlib.blake2b(digest_size=digest_bytes)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


##########################################################################################
# DATASET GENERATION
##########################################################################################
def make_sample(instance: TspInstance, cfg: RenderConfig, algo: str = "dp") -> Sample:
    """solve instance exactly, then render its input image and label"""
    tour = instance.solution() or solve(instance, algo)
    image, label = render_sample(instance, tour, cfg)
    return Sample(instance.with_solution(tour), image, label)


def _make_indexed(index, n, seed, cfg, algo):
    return make_sample(generate_instance(n, [seed, index], instance_id=f"n{n}-s{seed}-{index:05d}"), cfg, algo)


def generate_samples(
    n: int, count: int, seed: int, cfg: RenderConfig, algo: str = "dp", jobs: int = 1
) -> List[Sample]:
    """
    count labeled samples of n cities; sample k is seeded by (seed, k) so results
    do not depend on jobs

    Errors:
        SizeLimitError
    """
    if algo in SIZE_LIMITS and n > SIZE_LIMITS[algo]:
        raise SizeLimitError(f"{algo} is limited to {SIZE_LIMITS[algo]} cities, got {n}")
    logger.info("Generating %d samples of %d cities (seed %d)", count, n, seed)
    return map_jobs(partial(_make_indexed, n=n, seed=seed, cfg=cfg, algo=algo), range(count), jobs)


def build_dataset(store: DatasetStore, samples: Iterable[Sample], manifest: dict):
    for sample in samples:
        store.add(sample)
    store.write_manifest({**manifest, "count": len(store)})
    return store
