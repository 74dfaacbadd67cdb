import pytest

from synnamon.trees import Tree, parse_tree

from treegen import S_TREE_TEXT


@pytest.fixture
def s_tree() -> Tree:
    return parse_tree(S_TREE_TEXT)
