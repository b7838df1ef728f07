import copy
from collections import OrderedDict


class MemoryClient:
    """
    uses dictionaries to emulate a dataset directory
    """

    def __init__(self, path=None):
        self.path = path
        self.data = {}
        self.manifests = {}

    def _split(self, split):
        return self.data.setdefault(split, OrderedDict())

    def put(self, split, sample):
        self._split(split)[sample.instance.id] = sample

    def get(self, split, sample_id):
        return self._split(split)[sample_id]

    def list(self, split):
        return list(self._split(split))

    def contains(self, split, sample_id):
        return sample_id in self._split(split)

    def delete(self, split, sample_id):
        self._split(split).pop(sample_id)

    def splits(self):
        return {"default"} | set(self.data) | set(self.manifests)

    def create_split(self, split):
        self._split(split)

    def drop_split(self, split):
        self.data.pop(split, None)
        self.manifests.pop(split, None)

    def write_manifest(self, split, manifest):
        self.manifests[split] = copy.deepcopy(manifest)

    def read_manifest(self, split):
        return copy.deepcopy(self.manifests.get(split))
