use roxmltree::{Document, Node};

const TEI_NS: &str = "http://www.tei-c.org/ns/1.0";

/// Paragraphs of a TEI document as produced by a scholarly PDF parser:
/// the title, abstract paragraphs, then every `head` and `p` in the body,
/// one paragraph each. Whitespace inside a paragraph is collapsed.
pub fn tei_paragraphs(xml: &str) -> Result<Vec<String>, String> {
    let doc = Document::parse(xml).map_err(|e| format!("invalid TEI XML: {e}"))?;
    let root = doc.root_element();
    if root.tag_name().name() != "TEI" {
        return Err(format!("root element is <{}>, not <TEI>", root.tag_name().name()));
    }

    let mut out = Vec::new();
    if let Some(header) = child(root, "teiHeader") {
        if let Some(title) = header
            .descendants()
            .find(|n| is_tei(n, "title") && n.ancestors().any(|a| is_tei(&a, "titleStmt")))
        {
            out.push(flat_text(title));
        }
        if let Some(abs) = header.descendants().find(|n| is_tei(n, "abstract")) {
            out.extend(abs.descendants().filter(|n| is_tei(n, "p")).map(flat_text));
        }
    }
    if let Some(body) = child(root, "text").and_then(|t| child(t, "body")) {
        for n in body.descendants() {
            if (is_tei(&n, "head") && n.parent().is_some_and(|p| is_tei(&p, "div")))
                || (is_tei(&n, "p") && !n.ancestors().skip(1).any(|a| is_tei(&a, "p")))
            {
                out.push(flat_text(n));
            }
        }
    }
    out.retain(|p| !p.is_empty());
    Ok(out)
}

/// Text-node groups of an arbitrary XML document, one paragraph per element
/// that directly holds text. This mirrors what a generic extractor sees.
pub(crate) fn xml_text_blocks(xml: &str) -> Option<Vec<String>> {
    let doc = Document::parse(xml).ok()?;
    let mut out = Vec::new();
    for n in doc.descendants().filter(Node::is_element) {
        let direct: String = n
            .children()
            .filter(Node::is_text)
            .filter_map(|t| t.text())
            .collect::<Vec<_>>()
            .join(" ");
        let direct = collapse(&direct);
        if !direct.is_empty() {
            out.push(direct);
        }
    }
    Some(out)
}

/// Split plain text on blank lines; each block is trimmed and blocks with no
/// visible characters are dropped.
pub fn segment_plain_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_string());
    }
    out.retain(|p| !p.is_empty());
    out
}

fn is_tei(n: &Node<'_, '_>, name: &str) -> bool {
    n.is_element() && n.tag_name().name() == name && n.tag_name().namespace().is_none_or(|ns| ns == TEI_NS)
}

fn child<'a, 'i>(n: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    n.children().find(|c| is_tei(c, name))
}

fn flat_text(n: Node<'_, '_>) -> String {
    let raw: String = n.descendants().filter(Node::is_text).filter_map(|t| t.text()).collect();
    collapse(&raw)
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
