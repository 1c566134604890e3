use scraper::{ElementRef, Html, Selector};

use super::IngestError;

/// Render the first `<table>` in `html` as a markdown pipe table.
///
/// The first row becomes the header. Row and column spans are flattened by
/// repeating the spanned cell's text in every covered position.
pub fn html_table_to_markdown(html: &str) -> Result<String, IngestError> {
    let fragment = Html::parse_fragment(html);
    let table_sel = Selector::parse("table").expect("static selector");
    let table = fragment
        .select(&table_sel)
        .next()
        .ok_or_else(|| IngestError::MalformedTable("no <table> element".into()))?;

    let rows = own_rows(table);
    if rows.is_empty() {
        return Err(IngestError::MalformedTable("table has no rows".into()));
    }

    // grid[r][c]; spans from earlier rows reserve later cells
    let mut grid: Vec<Vec<Option<String>>> = vec![Vec::new(); rows.len()];
    for (r, row) in rows.iter().enumerate() {
        let mut c = 0;
        for cell in row.children().filter_map(ElementRef::wrap) {
            let name = cell.value().name();
            if name != "td" && name != "th" {
                continue;
            }
            while grid[r].get(c).is_some_and(Option::is_some) {
                c += 1;
            }
            let text = escape_pipes(&collapse_whitespace(&cell.text().collect::<String>()));
            let colspan = span_attr(cell, "colspan");
            let rowspan = span_attr(cell, "rowspan").min(rows.len() - r);
            for dr in 0..rowspan {
                let target = &mut grid[r + dr];
                if target.len() < c + colspan {
                    target.resize(c + colspan, None);
                }
                for slot in &mut target[c..c + colspan] {
                    if slot.is_none() {
                        *slot = Some(text.clone());
                    }
                }
            }
            c += colspan;
        }
    }

    let width = grid.iter().map(Vec::len).max().unwrap_or(0);
    if width == 0 {
        return Err(IngestError::MalformedTable("rows contain no cells".into()));
    }

    let render = |row: &Vec<Option<String>>| {
        let mut line = String::from("|");
        for c in 0..width {
            line.push(' ');
            line.push_str(row.get(c).and_then(Option::as_deref).unwrap_or(""));
            line.push_str(" |");
        }
        line
    };
    let mut lines = Vec::with_capacity(grid.len() + 1);
    lines.push(render(&grid[0]));
    lines.push(format!("|{}", " --- |".repeat(width)));
    lines.extend(grid[1..].iter().map(render));
    Ok(lines.join("\n"))
}

/// Rows belonging to this table, excluding rows of nested tables.
fn own_rows(table: ElementRef<'_>) -> Vec<ElementRef<'_>> {
    let mut rows = Vec::new();
    for child in table.children().filter_map(ElementRef::wrap) {
        match child.value().name() {
            "tr" => rows.push(child),
            "thead" | "tbody" | "tfoot" => rows.extend(
                child
                    .children()
                    .filter_map(ElementRef::wrap)
                    .filter(|e| e.value().name() == "tr"),
            ),
            _ => {}
        }
    }
    rows
}

fn span_attr(cell: ElementRef<'_>, name: &str) -> usize {
    cell.value()
        .attr(name)
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
        .min(1000)
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn escape_pipes(s: &str) -> String {
    s.replace('|', "\\|")
}
