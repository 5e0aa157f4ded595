//! Operator command routing: pending -> delivered -> acked, with redelivery
//! of unacknowledged commands.

use aquagreen_core::telemetry::{Command, CommandAction, CommandState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const REDELIVERY_AFTER_S: u64 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommandError {
    #[error("unknown command {0}")]
    NotFound(u64),
    #[error("command {id} is {state:?}; cannot acknowledge")]
    IllegalTransition { id: u64, state: CommandState },
    #[error("command {id} belongs to gateway {owner}")]
    WrongGateway { id: u64, owner: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    #[serde(flatten)]
    pub command: Command,
    pub delivered_at: Option<u64>,
    pub deliveries: u32,
    pub acked_at: Option<u64>,
}

#[derive(Debug, Default)]
pub struct CommandBook {
    entries: BTreeMap<u64, CommandEntry>,
    next_id: u64,
    redelivery_s: u64,
}

impl CommandBook {
    pub fn new(redelivery_s: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            next_id: 1,
            redelivery_s,
        }
    }

    pub fn issue(
        &mut self,
        gateway_id: &str,
        tank_id: &str,
        action: CommandAction,
        issued_by: &str,
        now: u64,
    ) -> Command {
        let id = self.next_id;
        self.next_id += 1;
        let command = Command {
            command_id: id,
            gateway_id: gateway_id.to_string(),
            tank_id: tank_id.to_string(),
            action,
            issued_by: issued_by.to_string(),
            issued_at: now,
            state: CommandState::Pending,
        };
        self.entries.insert(
            id,
            CommandEntry {
                command: command.clone(),
                delivered_at: None,
                deliveries: 0,
                acked_at: None,
            },
        );
        command
    }

    /// Hand out pending commands for `gateway_id`, plus delivered ones whose
    /// ack is overdue. Each returned command is marked delivered at `now`.
    pub fn fetch_pending(&mut self, gateway_id: &str, now: u64) -> Vec<Command> {
        let redelivery = self.redelivery_s;
        self.entries
            .values_mut()
            .filter(|e| e.command.gateway_id == gateway_id)
            .filter(|e| match e.command.state {
                CommandState::Pending => true,
                CommandState::Delivered => e
                    .delivered_at
                    .is_some_and(|t| now >= t + redelivery),
                CommandState::Acked => false,
            })
            .map(|e| {
                e.command.state = CommandState::Delivered;
                e.delivered_at = Some(now);
                e.deliveries += 1;
                e.command.clone()
            })
            .collect()
    }

    pub fn ack(&mut self, id: u64, gateway_id: &str, now: u64) -> Result<Command, CommandError> {
        let e = self.entries.get_mut(&id).ok_or(CommandError::NotFound(id))?;
        if e.command.gateway_id != gateway_id {
            return Err(CommandError::WrongGateway {
                id,
                owner: e.command.gateway_id.clone(),
            });
        }
        if e.command.state != CommandState::Delivered {
            return Err(CommandError::IllegalTransition {
                id,
                state: e.command.state,
            });
        }
        e.command.state = CommandState::Acked;
        e.acked_at = Some(now);
        Ok(e.command.clone())
    }

    pub fn get(&self, id: u64) -> Option<&CommandEntry> {
        self.entries.get(&id)
    }

    pub fn all(&self) -> impl Iterator<Item = &CommandEntry> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delivered_once_then_redelivered_after_timeout() {
        let mut b = CommandBook::new(REDELIVERY_AFTER_S);
        let c = b.issue("gw-1", "tank-1", CommandAction::AerationOn, "op", 0);
        assert_eq!(b.fetch_pending("gw-1", 1).len(), 1);
        assert!(b.fetch_pending("gw-1", 2).is_empty());
        assert!(b.fetch_pending("gw-2", 2).is_empty());
        assert!(b.fetch_pending("gw-1", 30).is_empty());
        assert_eq!(b.fetch_pending("gw-1", 31).len(), 1);
        assert_eq!(b.get(c.command_id).unwrap().deliveries, 2);
    }

    #[test]
    fn ack_guards_transitions() {
        let mut b = CommandBook::new(REDELIVERY_AFTER_S);
        let c = b.issue("gw-1", "tank-1", CommandAction::AerationOff, "op", 0);
        assert!(matches!(
            b.ack(c.command_id, "gw-1", 0),
            Err(CommandError::IllegalTransition { state: CommandState::Pending, .. })
        ));
        b.fetch_pending("gw-1", 0);
        assert!(matches!(b.ack(c.command_id, "gw-2", 0), Err(CommandError::WrongGateway { .. })));
        assert_eq!(b.ack(c.command_id, "gw-1", 1).unwrap().state, CommandState::Acked);
        assert!(matches!(
            b.ack(c.command_id, "gw-1", 2),
            Err(CommandError::IllegalTransition { state: CommandState::Acked, .. })
        ));
        assert_eq!(b.ack(99, "gw-1", 2), Err(CommandError::NotFound(99)));
        assert!(b.fetch_pending("gw-1", 1000).is_empty());
    }
}
