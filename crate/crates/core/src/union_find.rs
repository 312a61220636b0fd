/// Disjoint sets over `0..len` with path compression and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub(crate) fn find(&mut self, id: usize) -> usize {
        let mut root = id;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = id;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] >= self.size[rb] {
            self.parent[rb] = ra;
            self.size[ra] += self.size[rb];
        } else {
            self.parent[ra] = rb;
            self.size[rb] += self.size[ra];
        }
    }

    /// Class index of every element, classes numbered in order of their least
    /// member, plus the members of each class in increasing order.
    pub(crate) fn canonical_classes(&mut self) -> (Vec<usize>, Vec<Vec<usize>>) {
        let n = self.parent.len();
        let mut class_of_root = vec![usize::MAX; n];
        let mut class_of = vec![0; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if class_of_root[r] == usize::MAX {
                class_of_root[r] = members.len();
                members.push(Vec::new());
            }
            class_of[i] = class_of_root[r];
            members[class_of_root[r]].push(i);
        }
        (class_of, members)
    }
}
