//! Self-contained HTML rendering of a stored cloud, for iframes.

use crate::query::{CloudResponse, HintedItem};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn tag_span(term: &str, weight: f64, size: f64) -> String {
    format!(
        r#"<span class="tag" title="{w}" style="font-size:{size:.2}px">{t}</span>"#,
        w = weight,
        t = escape(term),
    )
}

/// One `span.tag` per tag in list order. Runs of glued tags are wrapped in a
/// `span.glued` that never breaks across lines.
pub fn render(response: &CloudResponse) -> String {
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut glue_next = false;
    for item in &response.body.items {
        match item {
            HintedItem::Tag { term, weight, display_size, .. } => {
                let span = tag_span(term, *weight, *display_size);
                match runs.last_mut() {
                    Some(run) if glue_next => run.push(span),
                    _ => runs.push(vec![span]),
                }
                glue_next = false;
            }
            HintedItem::Glued => glue_next = true,
            HintedItem::Permutable => {}
        }
    }
    let mut html = String::new();
    html.push_str(&format!(
        r#"<div class="tagcube-cloud" data-cloud="{}" data-approximate="{}" style="line-height:1.4">"#,
        escape(&response.id),
        response.body.approximate
    ));
    for run in runs {
        html.push('\n');
        if run.len() > 1 {
            html.push_str(r#"<span class="glued" style="white-space:nowrap">"#);
            html.push_str(&run.join("&nbsp;"));
            html.push_str("</span>");
        } else {
            html.push_str(&run[0]);
        }
    }
    html.push_str("\n</div>\n");
    html
}
