# -*- coding: utf-8 -*-

r"""CATT UTILS.

Input/output helpers of the command-line pipelines: JSON-lines datasets
with base64 encoded frames, the phrase inventory, the run manifest and the
evaluation reports (JSON plus an aligned plain-text table).

"""

from __future__ import absolute_import, print_function
import base64
import hashlib
import io
import json
import os
import numpy as np
from astropy.table import Table
from adabias.synth_task import SPLITS, SynthConfig, Utterance
from adabias.context_encoder import ContextPhrase, read_phrase_file, \
    write_phrase_file

DATASET_EXTENSION = '.jsonl'
INVENTORY_NAME = 'inventory.json'
PHRASE_FILES = {'entities': 'entities.txt', 'distractors': 'distractors.txt'}
MANIFEST_NAME = 'manifest.json'


def encode_frames(frames):
    r"""Base64 text of the little-endian float32 bytes of ``frames``."""
    data = np.ascontiguousarray(frames, dtype='<f4')
    return base64.b64encode(data.tobytes()).decode('ascii')


def decode_frames(text, shape):
    r"""Inverse of :func:`encode_frames`."""
    values = np.frombuffer(base64.b64decode(text), dtype='<f4')
    if values.size != int(np.prod(shape)):
        raise ValueError('Frame payload holds {} values, shape {} '
                         'expected.'.format(values.size, tuple(shape)))
    return values.reshape(shape).astype(np.float32)


def utterance_to_record(utt):
    return {'id': utt.uid, 'tokens': list(utt.tokens),
            'entities': [list(phrase) for phrase in utt.entities],
            'shape': list(utt.frames.shape),
            'frames': encode_frames(utt.frames)}


def record_to_utterance(record):
    missing = [key for key in ('id', 'tokens', 'entities', 'shape', 'frames')
               if key not in record]
    if missing:
        raise ValueError('Dataset record lacks {}.'.format(
            ', '.join(missing)))
    frames = decode_frames(record['frames'], record['shape'])
    return Utterance(record['id'], record['tokens'], record['entities'],
                     frames)


def save_dataset(utterances, path):
    r"""Write utterances as JSON-lines, one record per line.

    Parameters
    ----------
    utterances: list of adabias.synth_task.Utterance
        Utterances to save.
    path: str
        Destination file.
    """
    with io.open(path, 'w', encoding='utf-8', newline='\n') as handle:
        for utt in utterances:
            handle.write(json.dumps(utterance_to_record(utt),
                                    sort_keys=True) + u'\n')


def load_dataset(path):
    r"""Read a dataset written by :func:`save_dataset`.

    Raises
    ------
    IOError
        For a non existent file.
    """
    if not os.path.isfile(path):
        raise IOError('Dataset file {} does not exist.'.format(path))
    utterances = []
    with io.open(path, 'r', encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError:
                raise ValueError('{}:{} is not valid JSON.'.format(path,
                                                                   line_no))
            utterances.append(record_to_utterance(record))
    return utterances


def dataset_path(data_dir, split):
    return os.path.join(data_dir, split + DATASET_EXTENSION)


def save_inventory(corpus, path):
    r"""Write the entity and distractor phrases with the corpus config."""
    content = {
        'config': corpus.config.to_dict(),
        'entities': [list(phrase) for phrase in corpus.entities],
        'distractors': [list(phrase) for phrase in corpus.distractors],
        'sound_alikes': dict((str(rare), common) for rare, common in
                             sorted(corpus.sound_alikes.items())),
    }
    with io.open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(json.dumps(content, sort_keys=True, indent=1) + u'\n')


def load_inventory(path):
    r"""Read an inventory file.

    Returns
    -------
    config: adabias.synth_task.SynthConfig
    entities: list of adabias.context_encoder.ContextPhrase
    distractors: list of adabias.context_encoder.ContextPhrase
    """
    if not os.path.isfile(path):
        raise IOError('Inventory file {} does not exist.'.format(path))
    with io.open(path, 'r', encoding='utf-8') as handle:
        content = json.load(handle)
    config = SynthConfig.from_dict(content['config'])
    entities = [ContextPhrase(phrase) for phrase in content['entities']]
    distractors = [ContextPhrase(phrase)
                   for phrase in content['distractors']]
    return config, entities, distractors


def save_corpus(corpus, data_dir):
    r"""Write the four splits, the inventory and the phrase files.

    Returns
    -------
    list of str
        Written file paths.
    """
    if not os.path.isdir(data_dir):
        os.makedirs(data_dir)
    written = []
    for split in SPLITS:
        path = dataset_path(data_dir, split)
        save_dataset(corpus.split(split), path)
        written.append(path)
    path = os.path.join(data_dir, INVENTORY_NAME)
    save_inventory(corpus, path)
    written.append(path)
    for kind, name in sorted(PHRASE_FILES.items()):
        path = os.path.join(data_dir, name)
        write_phrase_file(path, getattr(corpus, kind))
        written.append(path)
    return written


def load_phrase_pool(data_dir):
    r"""Entity and distractor phrases of a corpus, read from the phrase
    files written by :func:`save_corpus`."""
    pool = []
    for kind in ('entities', 'distractors'):
        path = os.path.join(data_dir, PHRASE_FILES[kind])
        if not os.path.isfile(path):
            raise IOError('Phrase file {} does not exist.'.format(path))
        pool.extend(read_phrase_file(path))
    return pool


def file_sha256(path, chunk_size=1 << 16):
    digest = hashlib.sha256()
    with io.open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(paths, seed, out_dir, extra=None):
    r"""Write ``manifest.json`` listing the seed and a hash per file.

    File names are stored relative to ``out_dir`` so that two runs in
    different directories give the same manifest.
    """
    files = dict((os.path.relpath(path, out_dir), file_sha256(path))
                 for path in paths)
    content = {'seed': int(seed), 'files': files}
    if extra:
        content.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    with io.open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(json.dumps(content, sort_keys=True, indent=1) + u'\n')
    return path


def report_table(rows, columns):
    r"""Build an astropy table from a list of flat dictionaries.

    Parameters
    ----------
    rows: list of dict
        Report rows.
    columns: list of str
        Column order; missing values are written as ``'-'``.

    Returns
    -------
    astropy.table.Table
    """
    data = []
    for column in columns:
        values = [row.get(column) for row in rows]
        if all(isinstance(val, float) for val in values):
            data.append(np.round(np.asarray(values, dtype=np.float64), 4))
        else:
            data.append([('-' if val is None else str(val))
                         for val in values])
    return Table(data, names=columns)


def write_report(report, rows, columns, out_dir, name):
    r"""Write ``<name>.json`` and the aligned ``<name>.txt`` table.

    Parameters
    ----------
    report: dict
        Full JSON report.
    rows: list of dict
        Flat rows rendered in the text table.
    columns: list of str
        Table columns.
    out_dir: str
        Output directory (created if needed).
    name: str
        Base file name.

    Returns
    -------
    tuple of str
        Paths of the JSON and text files.
    """
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    json_path = os.path.join(out_dir, name + '.json')
    with io.open(json_path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(json.dumps(report, sort_keys=True, indent=1) + u'\n')
    text_path = os.path.join(out_dir, name + '.txt')
    if rows:
        report_table(rows, columns).write(text_path,
                                          format='ascii.fixed_width',
                                          overwrite=True)
    else:
        io.open(text_path, 'w').close()
    return json_path, text_path
