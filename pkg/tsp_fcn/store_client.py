import json
import os
import shutil
from collections import OrderedDict

from .instance import instance_to_dict, load_instances
from .raster import Sample, load_label_png, load_png, save_label_png, save_png

DEFAULT_SPLIT = "default"
MANIFEST = "manifest.json"
INSTANCES = "instances.jsonl"


class DiskClient:
    """
    reads and writes the dataset directory layout:
        <root>[/<split>]/manifest.json, instances.jsonl, images/{id}.png, labels/{id}.png

    the default split lives directly in <root>
    """

    def __init__(self, path):
        if path is None:
            raise ValueError("DiskClient needs a dataset directory")
        self.path = str(path)
        self._index = {}

    def _dir(self, split):
        return self.path if split == DEFAULT_SPLIT else os.path.join(self.path, split)

    def _load(self, split):
        if split not in self._index:
            jsonl = os.path.join(self._dir(split), INSTANCES)
            instances = load_instances(jsonl) if os.path.exists(jsonl) else []
            self._index[split] = OrderedDict((x.id, x) for x in instances)
        return self._index[split]

    def _flush(self, split):
        directory = self._dir(split)
        with open(os.path.join(directory, INSTANCES), "w", encoding="utf-8") as f:
            for instance in self._load(split).values():
                f.write(json.dumps(instance_to_dict(instance)) + "\n")

    def _append(self, split, instance):
        with open(os.path.join(self._dir(split), INSTANCES), "a", encoding="utf-8") as f:
            f.write(json.dumps(instance_to_dict(instance)) + "\n")

    def put(self, split, sample):
        directory = self._dir(split)
        os.makedirs(os.path.join(directory, "images"), exist_ok=True)
        os.makedirs(os.path.join(directory, "labels"), exist_ok=True)
        save_png(sample.image, os.path.join(directory, "images", f"{sample.instance.id}.png"))
        if sample.label is not None:
            save_label_png(sample.label, os.path.join(directory, "labels", f"{sample.instance.id}.png"))
        index = self._load(split)
        replaced = sample.instance.id in index
        index[sample.instance.id] = sample.instance
        if replaced:
            self._flush(split)
        else:
            self._append(split, sample.instance)

    def get(self, split, sample_id):
        instance = self._load(split)[sample_id]
        directory = self._dir(split)
        image = load_png(os.path.join(directory, "images", f"{sample_id}.png"))
        label_path = os.path.join(directory, "labels", f"{sample_id}.png")
        label = load_label_png(label_path) if os.path.exists(label_path) else None
        return Sample(instance, image, label)

    def list(self, split):
        return list(self._load(split))

    def contains(self, split, sample_id):
        return sample_id in self._load(split)

    def delete(self, split, sample_id):
        self._load(split).pop(sample_id)
        directory = self._dir(split)
        for sub in ("images", "labels"):
            path = os.path.join(directory, sub, f"{sample_id}.png")
            if os.path.exists(path):
                os.remove(path)
        self._flush(split)

    def splits(self):
        found = {DEFAULT_SPLIT}
        if os.path.isdir(self.path):
            for entry in os.listdir(self.path):
                sub = os.path.join(self.path, entry)
                if os.path.isdir(sub) and (
                    os.path.exists(os.path.join(sub, INSTANCES)) or os.path.exists(os.path.join(sub, MANIFEST))
                ):
                    found.add(entry)
        return found

    def create_split(self, split):
        # directories appear on the first write
        pass

    def drop_split(self, split):
        self._index.pop(split, None)
        shutil.rmtree(self._dir(split), ignore_errors=True)

    def write_manifest(self, split, manifest):
        os.makedirs(self._dir(split), exist_ok=True)
        with open(os.path.join(self._dir(split), MANIFEST), "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

    def read_manifest(self, split):
        path = os.path.join(self._dir(split), MANIFEST)
        if not os.path.exists(path):
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)
