//! Reading and writing the per-ego file family (`<ego>.edges`, `.feat`,
//! `.egofeat`, `.featnames`, `.circles`).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{CircleAssignment, EgoNetwork, FeaturePath, NodeId, ProfileStore};
use crate::error::{Error, Result};

/// Everything parsed from one ego's files.
#[derive(Clone, Debug)]
pub struct LoadedEgo {
    pub network: EgoNetwork,
    pub profiles: ProfileStore,
    pub circles: Option<CircleAssignment>,
}

fn file(dir: &Path, ego: &str, ext: &str) -> PathBuf {
    dir.join(format!("{ego}.{ext}"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(path: &Path, line: usize, tok: &str) -> Result<NodeId> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("bad node id {tok:?}")))
}

fn parse_bits<'a>(path: &Path, line: usize, toks: impl Iterator<Item = &'a str>) -> Result<Vec<u8>> {
    toks.map(|t| match t {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(parse_err(path, line, format!("feature value {t:?} is not 0 or 1"))),
    })
    .collect()
}

/// Non-blank lines with 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Loads `<ego>.*` from `dir`. `.edges` and `.feat` are required; nodes
/// that appear only in `.edges` get all-zero profiles. Self-loops are
/// dropped with a warning.
pub fn load_ego_network(dir: &Path, ego: &str, directed: bool) -> Result<LoadedEgo> {
    let edges_path = file(dir, ego, "edges");
    let feat_path = file(dir, ego, "feat");
    let edges_text = read(&edges_path)?;
    let feat_text = read(&feat_path)?;

    let mut edges = Vec::new();
    let mut ids = BTreeSet::new();
    for (ln, line) in lines(&edges_text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&edges_path, ln, "expected \"src dst\""));
        }
        let a = parse_id(&edges_path, ln, toks[0])?;
        let b = parse_id(&edges_path, ln, toks[1])?;
        ids.insert(a);
        ids.insert(b);
        if a == b {
            log::warn!("{}:{ln}: skipping self-loop on {a}", edges_path.display());
            continue;
        }
        edges.push((a, b));
    }

    let mut width: Option<usize> = None;
    let mut feat_rows: HashMap<NodeId, Vec<u8>> = HashMap::new();
    for (ln, line) in lines(&feat_text) {
        let mut toks = line.split_whitespace();
        let id = parse_id(&feat_path, ln, toks.next().unwrap_or_default())?;
        let bits = parse_bits(&feat_path, ln, toks)?;
        match width {
            None => width = Some(bits.len()),
            Some(w) if w != bits.len() => {
                return Err(Error::FeatureLength {
                    path: feat_path,
                    line: ln,
                    expected: w,
                    found: bits.len(),
                })
            }
            _ => {}
        }
        if feat_rows.insert(id, bits).is_some() {
            return Err(parse_err(&feat_path, ln, format!("duplicate node {id}")));
        }
        ids.insert(id);
    }

    let egofeat_path = file(dir, ego, "egofeat");
    let ego_row = match read_optional(&egofeat_path)? {
        Some(text) => {
            let mut rows = lines(&text);
            let row = match rows.next() {
                Some((ln, line)) => {
                    let bits = parse_bits(&egofeat_path, ln, line.split_whitespace())?;
                    if let Some(w) = width.filter(|&w| w != bits.len()) {
                        return Err(Error::FeatureLength {
                            path: egofeat_path,
                            line: ln,
                            expected: w,
                            found: bits.len(),
                        });
                    }
                    width.get_or_insert(bits.len());
                    Some(bits)
                }
                None => None,
            };
            if let Some((ln, _)) = rows.next() {
                return Err(parse_err(&egofeat_path, ln, "expected a single line"));
            }
            row
        }
        None => None,
    };

    let featnames_path = file(dir, ego, "featnames");
    let names = match read_optional(&featnames_path)? {
        Some(text) => Some(parse_featnames(&featnames_path, &text)?),
        None => None,
    };
    if let (Some(names), Some(w)) = (&names, width) {
        if names.len() != w {
            return Err(Error::FeatureLength {
                path: featnames_path,
                line: names.len(),
                expected: w,
                found: names.len(),
            });
        }
    }
    let width = width.or(names.as_ref().map(Vec::len)).unwrap_or(0);

    let network = EgoNetwork::new(ids.iter().copied(), edges, directed)?;
    let rows: Vec<Vec<u8>> = network
        .nodes()
        .iter()
        .map(|id| feat_rows.remove(id).unwrap_or_else(|| vec![0; width]))
        .collect();
    let ego_row = ego_row.unwrap_or_else(|| vec![0; width]);
    let profiles = match names {
        Some(names) => ProfileStore::new(names, rows, ego_row)?,
        None => ProfileStore::anonymous(rows, Some(ego_row))?,
    };

    let circles_path = file(dir, ego, "circles");
    let circles = match read_optional(&circles_path)? {
        Some(text) => Some(parse_circles(&circles_path, &text, &network)?),
        None => None,
    };

    Ok(LoadedEgo {
        network,
        profiles,
        circles,
    })
}

fn parse_featnames(path: &Path, text: &str) -> Result<Vec<FeaturePath>> {
    let mut out = Vec::new();
    for (ln, line) in lines(text) {
        let (idx, name) = line
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(path, ln, "expected \"index name\""))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad feature index {idx:?}")))?;
        if idx != out.len() {
            return Err(parse_err(path, ln, format!("expected index {}, found {idx}", out.len())));
        }
        let fp = FeaturePath::parse(name).map_err(|e| parse_err(path, ln, e.to_string()))?;
        out.push(fp);
    }
    Ok(out)
}

/// Parses `.circles` text: one circle per line, its name followed by
/// member ids. Fields are tab-separated; lines without tabs are split on
/// whitespace.
pub fn parse_circles(path: &Path, text: &str, network: &EgoNetwork) -> Result<CircleAssignment> {
    let mut named = Vec::new();
    for (ln, line) in lines(text) {
        let mut fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.is_empty() {
            continue;
        }
        let name = fields.remove(0).to_string();
        let ids = fields
            .iter()
            .map(|t| parse_id(path, ln, t))
            .collect::<Result<Vec<_>>>()?;
        for &id in &ids {
            if network.index_of(id).is_none() {
                return Err(Error::UnknownNode {
                    id,
                    context: format!("{}:{ln}", path.display()),
                });
            }
        }
        named.push((name, ids));
    }
    CircleAssignment::from_id_sets(network, &named)
}

/// Reads a `.circles` file against an already loaded network.
pub fn load_circles(path: &Path, network: &EgoNetwork) -> Result<CircleAssignment> {
    parse_circles(path, &read(path)?, network)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Renders circles in `.circles` format.
pub fn format_circles(network: &EgoNetwork, circles: &CircleAssignment) -> String {
    let mut s = String::new();
    for (k, ids) in circles.to_id_sets(network).iter().enumerate() {
        s.push_str(&circles.names()[k]);
        for id in ids {
            let _ = write!(s, "\t{id}");
        }
        s.push('\n');
    }
    s
}

/// Writes the file family for `ego` into `dir`. Node ids of isolated nodes
/// survive the round trip through their `.feat` rows.
pub fn write_ego_network(
    dir: &Path,
    ego: &str,
    network: &EgoNetwork,
    profiles: &ProfileStore,
    circles: Option<&CircleAssignment>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut edges = String::new();
    for &(i, j) in network.edges() {
        let _ = writeln!(edges, "{} {}", network.id(i), network.id(j));
    }
    write(&file(dir, ego, "edges"), &edges)?;

    let bits = |row: &[u8]| row.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ");
    let mut feat = String::new();
    for (i, id) in network.nodes().iter().enumerate() {
        let _ = writeln!(feat, "{id} {}", bits(profiles.row(i)));
    }
    write(&file(dir, ego, "feat"), &feat)?;
    write(&file(dir, ego, "egofeat"), &format!("{}\n", bits(profiles.ego())))?;

    let mut names = String::new();
    for (i, p) in profiles.names().iter().enumerate() {
        let _ = writeln!(names, "{i} {p}");
    }
    write(&file(dir, ego, "featnames"), &names)?;

    if let Some(c) = circles {
        write(&file(dir, ego, "circles"), &format_circles(network, c))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn minimal_edges_and_feat() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n2 3\n");
        put(d.path(), "0.feat", "1 0 1\n2 1 1\n");
        let got = load_ego_network(d.path(), "0", false).unwrap();
        assert_eq!(got.network.len(), 3);
        assert_eq!(got.network.edge_count(), 2);
        assert_eq!(got.profiles.row(2), &[0, 0]);
        assert_eq!(got.profiles.category_count(), 2);
        assert!(got.circles.is_none());
    }

    #[test]
    fn circles_line_parses() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n");
        put(d.path(), "0.feat", "1 0\n2 1\n");
        put(d.path(), "0.circles", "circle0\t1\t2\n");
        let got = load_ego_network(d.path(), "0", false).unwrap();
        let c = got.circles.unwrap();
        assert_eq!(c.to_id_sets(&got.network), vec![vec![NodeId(1), NodeId(2)]]);
        assert_eq!(c.names(), &["circle0".to_string()]);
    }

    #[test]
    fn ragged_feat_reports_line() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n");
        put(d.path(), "0.feat", "1 0 1 0 1 1\n2 0 1 0 1\n");
        match load_ego_network(d.path(), "0", false) {
            Err(Error::FeatureLength { line, expected, found, .. }) => {
                assert_eq!((line, expected, found), (2, 5, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_edge_line_reports_line() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n3\n");
        put(d.path(), "0.feat", "1 0\n");
        assert!(matches!(
            load_ego_network(d.path(), "0", false),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_circle_member_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n");
        put(d.path(), "0.feat", "1 0\n2 1\n");
        put(d.path(), "0.circles", "c\t1\t7\n");
        assert!(matches!(
            load_ego_network(d.path(), "0", false),
            Err(Error::UnknownNode { id: NodeId(7), .. })
        ));
    }

    #[test]
    fn featnames_define_categories() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "1 2\n");
        put(d.path(), "0.feat", "1 0 1 1\n2 1 1 0\n");
        put(d.path(), "0.featnames", "0 school;A\n1 school;B\n2 gender:1\n");
        let got = load_ego_network(d.path(), "0", false).unwrap();
        assert_eq!(got.profiles.categories(), &["school".to_string(), "gender".to_string()]);
    }

    #[test]
    fn wide_ids_and_self_loops() {
        let d = tempfile::tempdir().unwrap();
        put(d.path(), "0.edges", "100000000000000000001 5\n5 5\n");
        put(d.path(), "0.feat", "5 1\n");
        let got = load_ego_network(d.path(), "0", true).unwrap();
        assert_eq!(got.network.edge_count(), 1);
        assert_eq!(got.network.id(1), NodeId(100000000000000000001));
    }
}
