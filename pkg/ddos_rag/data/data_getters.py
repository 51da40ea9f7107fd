"""
Assists in grabbing the requisite data
"""

import copy
import json
import glob
import os

__all__ = ["list_directories", "get_file_name", "get_file", "get_column_map", "get_run_config"]

_data_dir = os.path.dirname(__file__)

_folders = ["columns", "configs", "flows"]
_data_folders = {x: os.path.join(_data_dir, x) for x in _folders}


def _get_folder_path(folder):
    if folder not in _data_folders:
        raise KeyError("Folder '%s' not recognized" % folder)

    return _data_folders[folder]


def list_directories():
    """
    List all known directories.
    """
    return sorted(copy.deepcopy(list(_data_folders.keys())))


def get_file_name(folder, filename=None):
    folder = _get_folder_path(folder)
    if filename:
        folder = os.path.join(folder, filename)

    files = glob.glob(folder)
    if len(files) == 1:
        return files[0]
    else:
        return sorted(files)


def get_file(folder, *args):
    folder = _get_folder_path(folder)
    filename = os.path.join(folder, *args)
    if not os.path.isfile(filename):
        raise OSError("Path '%s' not found." % filename)

    with open(filename, "r") as infile:
        ret = infile.read()

    return ret


def _get_json(folder, name):
    if ".json" not in name:
        name += ".json"

    filename = os.path.join(_get_folder_path(folder), name)
    if not os.path.isfile(filename):
        raise KeyError("No packaged %s entry named '%s'." % (folder, name))

    with open(filename, "r") as infile:
        ret = json.load(infile)
    return ret


def get_column_map(name="ciciot2023"):
    """
    Returns a semantic field -> CSV column name mapping.
    """
    return _get_json("columns", name)


def get_run_config(name="five_regimes"):
    """
    Returns a packaged run config document; artifact paths in it are relative.
    """
    return _get_json("configs", name)
