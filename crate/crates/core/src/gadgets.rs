//! Hardness gadget graphs.
//!
//! [`lp_gadget`] turns a graph `G` into one whose shortest-path metric needs
//! exactly `vc(G)` outliers to embed isometrically in l_p. [`l1_gadget`] is
//! the larger four-role variant used for the l_1 case.

use serde::{Deserialize, Serialize};

use crate::metric::Graph;

/// Role of a gadget node relative to its source node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    U1,
    U2,
    X,
    Y,
    Z,
    W,
}

/// A gadget graph with per-node provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetMap {
    pub source: Graph,
    pub gadget: Graph,
    /// `provenance[g] = (source node, role)` for gadget node `g`.
    pub provenance: Vec<(usize, Role)>,
}

impl GadgetMap {
    /// Gadget node holding `role` for source node `u`.
    pub fn node(&self, u: usize, role: Role) -> Option<usize> {
        self.provenance.iter().position(|&(s, r)| s == u && r == role)
    }
}

/// Nodes `2u` and `2u+1` are `u_1` and `u_2`. The gadget is complete except
/// for `u_2 v_2` whenever `uv` is an edge of `g`.
pub fn lp_gadget(g: &Graph) -> GadgetMap {
    let n = g.node_count();
    let total = 2 * n;
    let mut edges = Vec::new();
    for a in 0..total {
        for b in (a + 1)..total {
            let omitted = a % 2 == 1 && b % 2 == 1 && g.has_edge(a / 2, b / 2);
            if !omitted {
                edges.push((a, b));
            }
        }
    }
    let provenance = (0..n).flat_map(|u| [(u, Role::U1), (u, Role::U2)]).collect();
    GadgetMap {
        source: g.clone(),
        gadget: Graph::new(total, &edges).expect("gadget edges are simple"),
        provenance,
    }
}

/// Nodes `4u..4u+4` are `x_u, y_u, z_u, w_u`. The gadget is complete except
/// for every `x_u y_u` and for `x_u x_v` whenever `uv` is an edge of `g`.
pub fn l1_gadget(g: &Graph) -> GadgetMap {
    let n = g.node_count();
    let total = 4 * n;
    let role_of = |a: usize| a % 4;
    let mut edges = Vec::new();
    for a in 0..total {
        for b in (a + 1)..total {
            let (ua, ub) = (a / 4, b / 4);
            let xy_same = ua == ub && role_of(a) == 0 && role_of(b) == 1;
            let xx_edge = role_of(a) == 0 && role_of(b) == 0 && g.has_edge(ua, ub);
            if !(xy_same || xx_edge) {
                edges.push((a, b));
            }
        }
    }
    let provenance = (0..n)
        .flat_map(|u| [(u, Role::X), (u, Role::Y), (u, Role::Z), (u, Role::W)])
        .collect();
    GadgetMap {
        source: g.clone(),
        gadget: Graph::new(total, &edges).expect("gadget edges are simple"),
        provenance,
    }
}
