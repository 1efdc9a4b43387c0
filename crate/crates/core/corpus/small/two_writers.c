// Two handlers write the same status byte.
uint8 TOIE0 @ 0x6E.0;
uint8 INT0_EN @ 0x3D.0;
volatile uint8 status;
uint8 copy;

ISR(TIMER0_OVF_vect) {
    status = 1;
}

ISR(INT0_vect) {
    status = 2;
}

void main() {
    TOIE0 = 1;
    INT0_EN = 1;
    while (1) {
        copy = status;
    }
}
