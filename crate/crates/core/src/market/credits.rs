//! Simulated credit rail: integer balances plus per-trade escrow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::PublicIdentity;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreditError {
    #[error("account {0} does not exist")]
    UnknownAccount(PublicIdentity),
    #[error("account {0} already exists")]
    AccountExists(PublicIdentity),
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("amount overflows the ledger")]
    Overflow,
    #[error("trade {0} already holds escrow")]
    EscrowExists(u64),
    #[error("trade {0} holds no escrow")]
    NoEscrow(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CreditLedger {
    balances: BTreeMap<PublicIdentity, u64>,
    escrow: BTreeMap<u64, u64>,
    deposited: u64,
}

impl CreditLedger {
    pub fn has_account(&self, id: &PublicIdentity) -> bool {
        self.balances.contains_key(id)
    }

    pub fn balance_of(&self, id: &PublicIdentity) -> Option<u64> {
        self.balances.get(id).copied()
    }

    pub fn escrow_of(&self, trade_id: u64) -> u64 {
        self.escrow.get(&trade_id).copied().unwrap_or(0)
    }

    pub fn deposited(&self) -> u64 {
        self.deposited
    }

    pub fn total_balances(&self) -> u128 {
        self.balances.values().map(|b| u128::from(*b)).sum()
    }

    pub fn total_escrow(&self) -> u128 {
        self.escrow.values().map(|b| u128::from(*b)).sum()
    }

    /// Σ balances + Σ escrow = Σ deposits.
    pub fn conserved(&self) -> bool {
        self.total_balances() + self.total_escrow() == u128::from(self.deposited)
    }

    pub fn check_open(&self, id: &PublicIdentity) -> Result<(), CreditError> {
        if self.has_account(id) {
            return Err(CreditError::AccountExists(*id));
        }
        Ok(())
    }

    pub fn open(&mut self, id: &PublicIdentity) -> Result<(), CreditError> {
        self.check_open(id)?;
        self.balances.insert(*id, 0);
        Ok(())
    }

    pub fn check_deposit(&self, id: &PublicIdentity, amount: u64) -> Result<(), CreditError> {
        if amount == 0 {
            return Err(CreditError::ZeroAmount);
        }
        let balance = self.balance_of(id).ok_or(CreditError::UnknownAccount(*id))?;
        balance.checked_add(amount).ok_or(CreditError::Overflow)?;
        self.deposited.checked_add(amount).ok_or(CreditError::Overflow)?;
        Ok(())
    }

    pub fn deposit(&mut self, id: &PublicIdentity, amount: u64) -> Result<u64, CreditError> {
        self.check_deposit(id, amount)?;
        let b = self.balances.get_mut(id).expect("checked");
        *b += amount;
        self.deposited += amount;
        Ok(*b)
    }

    pub fn check_lock(&self, trade_id: u64, from: &PublicIdentity, amount: u64) -> Result<(), CreditError> {
        if amount == 0 {
            return Err(CreditError::ZeroAmount);
        }
        if self.escrow.contains_key(&trade_id) {
            return Err(CreditError::EscrowExists(trade_id));
        }
        let available = self.balance_of(from).ok_or(CreditError::UnknownAccount(*from))?;
        if available < amount {
            return Err(CreditError::InsufficientFunds { needed: amount, available });
        }
        Ok(())
    }

    pub fn lock(&mut self, trade_id: u64, from: &PublicIdentity, amount: u64) -> Result<(), CreditError> {
        self.check_lock(trade_id, from, amount)?;
        *self.balances.get_mut(from).expect("checked") -= amount;
        self.escrow.insert(trade_id, amount);
        Ok(())
    }

    /// Moves a trade's whole escrow to `to`, creating the account if needed.
    pub fn release(&mut self, trade_id: u64, to: &PublicIdentity) -> Result<u64, CreditError> {
        let amount = *self.escrow.get(&trade_id).ok_or(CreditError::NoEscrow(trade_id))?;
        let current = self.balance_of(to).unwrap_or(0);
        let next = current.checked_add(amount).ok_or(CreditError::Overflow)?;
        self.escrow.remove(&trade_id);
        self.balances.insert(*to, next);
        Ok(amount)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(n: u8) -> PublicIdentity {
        PublicIdentity([n; 32])
    }

    #[test]
    fn deposit_and_lock() {
        let mut l = CreditLedger::default();
        l.open(&id(1)).unwrap();
        assert_eq!(l.deposit(&id(1), 100), Ok(100));
        l.lock(7, &id(1), 30).unwrap();
        assert_eq!(l.balance_of(&id(1)), Some(70));
        assert_eq!(l.escrow_of(7), 30);
        assert_eq!(l.lock(8, &id(1), 71), Err(CreditError::InsufficientFunds { needed: 71, available: 70 }));
        assert_eq!(l.balance_of(&id(1)), Some(70));
        assert_eq!(l.release(7, &id(2)), Ok(30));
        assert_eq!(l.balance_of(&id(2)), Some(30));
        assert!(l.conserved());
    }

    #[test]
    fn zero_and_unknown_rejected() {
        let mut l = CreditLedger::default();
        assert_eq!(l.deposit(&id(1), 5), Err(CreditError::UnknownAccount(id(1))));
        l.open(&id(1)).unwrap();
        assert_eq!(l.deposit(&id(1), 0), Err(CreditError::ZeroAmount));
        assert_eq!(l.open(&id(1)), Err(CreditError::AccountExists(id(1))));
        assert_eq!(l.deposit(&id(1), u64::MAX), Ok(u64::MAX));
        assert_eq!(l.deposit(&id(1), 1), Err(CreditError::Overflow));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Open(u8),
        Deposit(u8, u64),
        Lock(u64, u8, u64),
        Release(u64, u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..4u8).prop_map(Op::Open),
            (0..4u8, 0..1000u64).prop_map(|(a, n)| Op::Deposit(a, n)),
            (0..8u64, 0..4u8, 0..500u64).prop_map(|(t, a, n)| Op::Lock(t, a, n)),
            (0..8u64, 0..4u8).prop_map(|(t, a)| Op::Release(t, a)),
        ]
    }

    proptest! {
        #[test]
        fn conservation_holds(ops in proptest::collection::vec(op(), 0..200)) {
            let mut l = CreditLedger::default();
            for o in ops {
                let before = l.clone();
                let r = match o {
                    Op::Open(a) => l.open(&id(a)).map(|_| ()),
                    Op::Deposit(a, n) => l.deposit(&id(a), n).map(|_| ()),
                    Op::Lock(t, a, n) => l.lock(t, &id(a), n),
                    Op::Release(t, a) => l.release(t, &id(a)).map(|_| ()),
                };
                if r.is_err() {
                    prop_assert_eq!(&l, &before);
                }
                prop_assert!(l.conserved());
            }
        }
    }
}
