//! `file_contexts`, init `*.rc` and `seapp_contexts` readers.

use serde::{Deserialize, Serialize};

use crate::policy::Ident;

/// Entries that parsed plus the number of lines that did not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub entries: Vec<T>,
    pub skipped: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            entries: Vec::new(),
            skipped: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileContextEntry {
    pub path_pattern: String,
    pub label_type: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcServiceEntry {
    pub service_name: String,
    pub executable_path: String,
    pub user: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeappEntry {
    /// Input selectors (`user`, `seinfo`, `name`, ...) in file order.
    pub selector: Vec<(String, String)>,
    pub domain: Ident,
    pub assigned_user_class: String,
}

fn content(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// `<path_regex> [<file type>] <user:role:type:level>`
pub fn parse_file_contexts(text: &str) -> Parsed<FileContextEntry> {
    let mut out = Parsed::default();
    for line in text.lines().map(content).filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            out.skipped += 1;
            continue;
        }
        let context = fields[fields.len() - 1];
        if context == "<<none>>" {
            continue;
        }
        match context.split(':').nth(2).map(Ident::new) {
            Some(Ok(label_type)) => out.entries.push(FileContextEntry {
                path_pattern: fields[0].to_string(),
                label_type,
            }),
            _ => out.skipped += 1,
        }
    }
    out
}

/// Service blocks of init scripts. A service without a `user` option runs
/// as root, as init does.
pub fn parse_rc(text: &str) -> Parsed<RcServiceEntry> {
    let mut out = Parsed::default();
    let mut current: Option<RcServiceEntry> = None;
    let flush = |cur: &mut Option<RcServiceEntry>, out: &mut Parsed<RcServiceEntry>| {
        if let Some(entry) = cur.take() {
            out.entries.push(entry);
        }
    };
    for raw in text.lines() {
        let line = content(raw);
        if line.is_empty() {
            continue;
        }
        let indented = raw.starts_with(char::is_whitespace);
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or_default();
        if !indented || matches!(first, "service" | "on" | "import") {
            flush(&mut current, &mut out);
            if first == "service" {
                match (words.next(), words.next()) {
                    (Some(name), Some(path)) if path.starts_with('/') => {
                        current = Some(RcServiceEntry {
                            service_name: name.to_string(),
                            executable_path: path.to_string(),
                            user: "root".to_string(),
                        });
                    }
                    _ => out.skipped += 1,
                }
            }
            continue;
        }
        if let (Some(entry), "user") = (current.as_mut(), first) {
            match words.next() {
                Some(user) => entry.user = user.to_string(),
                None => out.skipped += 1,
            }
        }
    }
    flush(&mut current, &mut out);
    out
}

const SEAPP_OUTPUT_KEYS: &[&str] = &["domain", "type", "levelFrom", "level"];

/// `key=value` lines; only lines assigning a `domain=` produce entries.
pub fn parse_seapp(text: &str) -> Parsed<SeappEntry> {
    let mut out = Parsed::default();
    'lines: for line in text.lines().map(content).filter(|l| !l.is_empty()) {
        let mut pairs = Vec::new();
        for word in line.split_whitespace() {
            match word.split_once('=') {
                Some((k, v)) if !k.is_empty() => pairs.push((k.to_string(), v.to_string())),
                _ => {
                    out.skipped += 1;
                    continue 'lines;
                }
            }
        }
        let Some((_, domain)) = pairs.iter().find(|(k, _)| k == "domain") else {
            continue;
        };
        let Ok(domain) = Ident::new(domain) else {
            out.skipped += 1;
            continue;
        };
        let user = pairs
            .iter()
            .find(|(k, _)| k == "user")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let selector = pairs
            .into_iter()
            .filter(|(k, _)| !SEAPP_OUTPUT_KEYS.contains(&k.as_str()))
            .collect();
        out.entries.push(SeappEntry {
            selector,
            domain,
            assigned_user_class: user,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_context_type_field() {
        let p = parse_file_contexts("/system/bin/mediadrmserver u:object_r:mediadrmserver_exec:s0");
        assert_eq!(
            p.entries,
            vec![FileContextEntry {
                path_pattern: "/system/bin/mediadrmserver".into(),
                label_type: Ident::new("mediadrmserver_exec").unwrap(),
            }]
        );
    }

    #[test]
    fn file_context_with_file_type_and_junk() {
        let p = parse_file_contexts(
            "# comment\n/dev/socket(/.*)?  -- u:object_r:socket_device:s0\n/proc <<none>>\nbroken\n/x u:object_r\n",
        );
        assert_eq!(p.entries.len(), 1);
        assert_eq!(p.entries[0].label_type.as_str(), "socket_device");
        assert_eq!(p.skipped, 2);
    }

    #[test]
    fn rc_service_with_user() {
        let p = parse_rc("service mediadrm /system/bin/mediadrmserver\n    user media");
        assert_eq!(
            p.entries,
            vec![RcServiceEntry {
                service_name: "mediadrm".into(),
                executable_path: "/system/bin/mediadrmserver".into(),
                user: "media".into(),
            }]
        );
    }

    #[test]
    fn rc_blocks_and_defaults() {
        let p = parse_rc(
            "on boot\n    start x\n\
             service a /system/bin/a --flag\n    class main\n    group system\n\
             service b relative/path\n\
             service c /vendor/bin/c\n    user system\non init\n    user nobody\n",
        );
        let users: Vec<_> = p.entries.iter().map(|e| (e.service_name.as_str(), e.user.as_str())).collect();
        assert_eq!(users, vec![("a", "root"), ("c", "system")]);
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn seapp_entries() {
        let p = parse_seapp(
            "user=_app seinfo=platform domain=platform_app type=app_data_file levelFrom=user\n\
             user=_app domain=untrusted_app type=app_data_file\n\
             user=_app seinfo=media type=media_data_file\n\
             garbage line\n",
        );
        assert_eq!(p.entries.len(), 2);
        assert_eq!(p.entries[1].domain.as_str(), "untrusted_app");
        assert_eq!(p.entries[1].assigned_user_class, "_app");
        assert_eq!(
            p.entries[0].selector,
            vec![("user".to_string(), "_app".to_string()), ("seinfo".into(), "platform".into())]
        );
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_file_contexts("").entries.is_empty());
        assert!(parse_rc("").entries.is_empty());
        assert!(parse_seapp("").entries.is_empty());
    }
}
