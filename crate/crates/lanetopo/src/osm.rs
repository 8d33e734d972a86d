//! OpenStreetMap XML to a geographic SD map.

use std::collections::BTreeMap;

use lanetopo_core::sdmap::{classify_tags, GeoSdMap, GeoWay};
use roxmltree::{Document, Node};

use crate::error::{Error, Result};

fn err_at(doc: &Document, node: Node, message: String) -> Error {
    let pos = doc.text_pos_at(node.range().start);
    Error::Osm { line: pos.row, column: pos.col, message }
}

fn attr<T: std::str::FromStr>(doc: &Document, node: Node, name: &str) -> Result<T> {
    let raw = node
        .attribute(name)
        .ok_or_else(|| err_at(doc, node, format!("<{}> is missing `{name}`", node.tag_name().name())))?;
    raw.parse().map_err(|_| err_at(doc, node, format!("`{name}` has invalid value {raw:?}")))
}

/// Parses `<node>` and `<way>` elements; ways are classified against the
/// highway whitelist. Relations and other elements are ignored.
pub fn parse_osm<S: AsRef<str>>(xml: &str, whitelist: &[S]) -> Result<GeoSdMap> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        Error::Osm { line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "osm" {
        return Err(err_at(&doc, root, format!("expected <osm> root, found <{}>", root.tag_name().name())));
    }
    let mut nodes = BTreeMap::new();
    let mut ways = Vec::new();
    for el in root.children().filter(Node::is_element) {
        match el.tag_name().name() {
            "node" => {
                let id: i64 = attr(&doc, el, "id")?;
                let lat: f64 = attr(&doc, el, "lat")?;
                let lon: f64 = attr(&doc, el, "lon")?;
                if !(lat.abs() <= 90.0 && lon.abs() <= 180.0) {
                    return Err(err_at(&doc, el, format!("node {id}: coordinates ({lat}, {lon}) out of range")));
                }
                nodes.insert(id, (lat, lon));
            }
            "way" => {
                let id: i64 = attr(&doc, el, "id")?;
                let mut refs = Vec::new();
                let mut tags = BTreeMap::new();
                for child in el.children().filter(Node::is_element) {
                    match child.tag_name().name() {
                        "nd" => refs.push(attr::<i64>(&doc, child, "ref")?),
                        "tag" => {
                            tags.insert(attr::<String>(&doc, child, "k")?, attr::<String>(&doc, child, "v")?);
                        }
                        _ => {}
                    }
                }
                let class = classify_tags(&tags, whitelist);
                ways.push((el, GeoWay { id, nodes: refs, tags, class }));
            }
            _ => {}
        }
    }
    for (el, way) in &ways {
        if way.nodes.len() < 2 {
            return Err(err_at(&doc, *el, format!("way {} has fewer than two nodes", way.id)));
        }
        if let Some(missing) = way.nodes.iter().find(|n| !nodes.contains_key(n)) {
            return Err(err_at(&doc, *el, format!("way {} references unknown node {missing}", way.id)));
        }
    }
    Ok(GeoSdMap::new(nodes, ways.into_iter().map(|(_, w)| w).collect())?)
}
